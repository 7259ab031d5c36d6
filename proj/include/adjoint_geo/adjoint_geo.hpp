#pragma once

#include "adjoint_geo/adjoint.hpp"
#include "adjoint_geo/csv.hpp"
#include "adjoint_geo/integrate.hpp"
#include "adjoint_geo/newton.hpp"
#include "adjoint_geo/ocp.hpp"
#include "adjoint_geo/parallel.hpp"
#include "adjoint_geo/sensitivity.hpp"
#include "adjoint_geo/systems.hpp"
#include "adjoint_geo/tableau.hpp"
#include "adjoint_geo/types.hpp"
#include "adjoint_geo/verify.hpp"
