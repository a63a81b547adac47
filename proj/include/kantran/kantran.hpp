#pragma once

#include "basins.hpp"
#include "center.hpp"
#include "core.hpp"
#include "fiber.hpp"
#include "number_theory.hpp"
#include "skew_product.hpp"
#include "torus.hpp"
#include "transitivity.hpp"
