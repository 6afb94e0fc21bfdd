#pragma once

#include "p2c/bench.hpp"
#include "p2c/consistency.hpp"
#include "p2c/dataset.hpp"
#include "p2c/domain.hpp"
#include "p2c/error.hpp"
#include "p2c/evaluate.hpp"
#include "p2c/planner.hpp"
#include "p2c/report.hpp"
#include "p2c/rules.hpp"
#include "p2c/search.hpp"
#include "p2c/surrogate.hpp"
