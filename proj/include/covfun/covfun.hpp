#pragma once

#include "covfun/error.hpp"
#include "covfun/estimators.hpp"
#include "covfun/functionals.hpp"
#include "covfun/linalg.hpp"
#include "covfun/montecarlo.hpp"
#include "covfun/parallel.hpp"
#include "covfun/quadrature.hpp"
#include "covfun/random.hpp"
#include "covfun/settings.hpp"
#include "covfun/theory.hpp"
