#pragma once

#include "rbergomi/autodiff/finite_diff.hpp"
#include "rbergomi/autodiff/ops.hpp"
#include "rbergomi/autodiff/tape.hpp"
#include "rbergomi/calibrator/bsde.hpp"
#include "rbergomi/calibrator/calibrate.hpp"
#include "rbergomi/calibrator/theta.hpp"
#include "rbergomi/errors.hpp"
#include "rbergomi/io/config.hpp"
#include "rbergomi/io/csv.hpp"
#include "rbergomi/market/chain.hpp"
#include "rbergomi/market/rate_curve.hpp"
#include "rbergomi/market/surface.hpp"
#include "rbergomi/nn/control_net.hpp"
#include "rbergomi/nn/layers.hpp"
#include "rbergomi/nn/optimizer.hpp"
#include "rbergomi/nn/param_net.hpp"
#include "rbergomi/nn/parameter_store.hpp"
#include "rbergomi/numerics/linalg.hpp"
#include "rbergomi/numerics/rng.hpp"
#include "rbergomi/numerics/soe.hpp"
#include "rbergomi/numerics/special.hpp"
#include "rbergomi/numerics/spline.hpp"
#include "rbergomi/numerics/time_grid.hpp"
#include "rbergomi/pricing/black_scholes.hpp"
#include "rbergomi/pricing/oracle.hpp"
#include "rbergomi/simulator/covariance.hpp"
#include "rbergomi/simulator/exact_reference.hpp"
#include "rbergomi/simulator/msoe.hpp"
#include "rbergomi/simulator/params.hpp"
