#pragma once

#include "excel_surv/bounds.hpp"
#include "excel_surv/cli.hpp"
#include "excel_surv/data.hpp"
#include "excel_surv/error.hpp"
#include "excel_surv/experiments.hpp"
#include "excel_surv/loss.hpp"
#include "excel_surv/metrics.hpp"
#include "excel_surv/model.hpp"
#include "excel_surv/parallel.hpp"
#include "excel_surv/random.hpp"
