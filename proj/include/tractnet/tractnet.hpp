#pragma once

#include "tractnet/matrix.hpp"
#include "tractnet/rng.hpp"
#include "tractnet/autodiff.hpp"
#include "tractnet/network.hpp"
#include "tractnet/ibp.hpp"
#include "tractnet/lp.hpp"
#include "tractnet/relaxation.hpp"
#include "tractnet/milp.hpp"
#include "tractnet/regularizers.hpp"
#include "tractnet/benchmarks.hpp"
#include "tractnet/trainer.hpp"
#include "tractnet/gradcheck.hpp"
#include "tractnet/experiment.hpp"
