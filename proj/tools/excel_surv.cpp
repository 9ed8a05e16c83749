#include <iostream>
#include <string>
#include <vector>

#include "excel_surv/cli.hpp"

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return excel_surv::cli::run(std::move(args), std::cout, std::cerr);
}
