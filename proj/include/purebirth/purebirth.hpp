#pragma once

#include "purebirth/analytic.hpp"
#include "purebirth/error.hpp"
#include "purebirth/forward_solver.hpp"
#include "purebirth/hypoexponential.hpp"
#include "purebirth/montecarlo.hpp"
#include "purebirth/random.hpp"
#include "purebirth/rate_model.hpp"
#include "purebirth/summation.hpp"
#include "purebirth/version.hpp"
