#pragma once

#include "detox/adversary.hpp"
#include "detox/aggregators.hpp"
#include "detox/config.hpp"
#include "detox/core.hpp"
#include "detox/engine.hpp"
#include "detox/filter_analysis.hpp"
#include "detox/harness.hpp"
#include "detox/report.hpp"
#include "detox/rng.hpp"
#include "detox/tasks.hpp"
#include "detox/types.hpp"
