#pragma once

#include "supermarket/errors.hpp"
#include "supermarket/experiments.hpp"
#include "supermarket/fixed_point.hpp"
#include "supermarket/io.hpp"
#include "supermarket/linalg.hpp"
#include "supermarket/map_ph.hpp"
#include "supermarket/ode.hpp"
#include "supermarket/rng.hpp"
#include "supermarket/simulator.hpp"
