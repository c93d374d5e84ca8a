#pragma once

#include "assignment.hpp"
#include "brownian.hpp"
#include "checksum.hpp"
#include "coefficients.hpp"
#include "duality.hpp"
#include "empirical_measure.hpp"
#include "experiments.hpp"
#include "families.hpp"
#include "measure_flow.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "rough_path.hpp"
#include "scenario.hpp"
#include "simulator.hpp"
#include "summation.hpp"
#include "test_functions.hpp"
#include "time_grid.hpp"
#include "weak_checker.hpp"
