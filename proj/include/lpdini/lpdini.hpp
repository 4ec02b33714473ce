#pragma once

#include "lpdini/config.hpp"
#include "lpdini/dyadic.hpp"
#include "lpdini/errors.hpp"
#include "lpdini/fft.hpp"
#include "lpdini/geometry.hpp"
#include "lpdini/harness.hpp"
#include "lpdini/kernels.hpp"
#include "lpdini/moduli.hpp"
#include "lpdini/operators.hpp"
#include "lpdini/parallel.hpp"
#include "lpdini/quadrature.hpp"
#include "lpdini/sampling.hpp"
