#pragma once

#include "thermo/errors.hpp"
#include "thermo/chebyshev.hpp"
#include "thermo/map_model.hpp"
#include "thermo/coding.hpp"
#include "thermo/induced.hpp"
#include "thermo/transfer_operator.hpp"
#include "thermo/pressure.hpp"
#include "thermo/gibbs.hpp"
#include "thermo/spectrum.hpp"
#include "thermo/bcf.hpp"
#include "thermo/parallel.hpp"
#include "thermo/config.hpp"
