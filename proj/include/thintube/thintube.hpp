#pragma once

#include "thintube/error.hpp"
#include "thintube/profile.hpp"
#include "thintube/quadrature.hpp"
#include "thintube/structured_form.hpp"
#include "thintube/lanczos.hpp"
#include "thintube/geometry.hpp"
#include "thintube/fiber_grid.hpp"
#include "thintube/fiber.hpp"
#include "thintube/effective.hpp"
#include "thintube/tube.hpp"
#include "thintube/richardson.hpp"
#include "thintube/config.hpp"
#include "thintube/harness.hpp"
