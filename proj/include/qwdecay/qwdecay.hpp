#pragma once

// Coined-walk spectral toolkit: builds defect walks on periodic boxes,
// locates discrete eigenvalues against the bulk arcs, and certifies
// exponential eigenfunction decay.

#include "qwdecay/certify.hpp"
#include "qwdecay/config.hpp"
#include "qwdecay/lattice.hpp"
#include "qwdecay/pipeline.hpp"
#include "qwdecay/rng.hpp"
#include "qwdecay/spectral.hpp"
#include "qwdecay/walk.hpp"
