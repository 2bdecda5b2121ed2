#pragma once

#include "uw1/errors.hpp"
#include "uw1/grid_measure.hpp"
#include "uw1/integrands.hpp"
#include "uw1/prox.hpp"
#include "uw1/grad_ops.hpp"
#include "uw1/pd_solver.hpp"
#include "uw1/oracle.hpp"
#include "uw1/apps.hpp"
