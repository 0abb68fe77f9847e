#pragma once

// Constrained generalized linear models by distance penalization: fits under
// sparsity, order, rank, and simple geometric constraints are computed by
// driving a smooth penalty on the squared distance to each constraint set.

#include "distglm/constraints.hpp"
#include "distglm/csv.hpp"
#include "distglm/errors.hpp"
#include "distglm/experiments.hpp"
#include "distglm/family.hpp"
#include "distglm/linalg.hpp"
#include "distglm/matrix_reg.hpp"
#include "distglm/solver.hpp"
