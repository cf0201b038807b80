#pragma once

// Everything except the dense oracle (which pulls in Eigen).
#include "gmrf/numeric.hpp"
#include "gmrf/lattice.hpp"
#include "gmrf/spectral.hpp"
#include "gmrf/meanfield.hpp"
#include "gmrf/free_energy.hpp"
#include "gmrf/em.hpp"
#include "gmrf/em_spectral.hpp"
#include "gmrf/degrade.hpp"
#include "gmrf/image_io.hpp"
