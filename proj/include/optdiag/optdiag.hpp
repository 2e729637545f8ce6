#pragma once

#include "optdiag/checkpoint.hpp"
#include "optdiag/config.hpp"
#include "optdiag/core.hpp"
#include "optdiag/errors.hpp"
#include "optdiag/metrics.hpp"
#include "optdiag/optimizers.hpp"
#include "optdiag/plot.hpp"
#include "optdiag/rng.hpp"
#include "optdiag/run.hpp"
#include "optdiag/runlog.hpp"
#include "optdiag/sharpness.hpp"
#include "optdiag/tasks.hpp"
