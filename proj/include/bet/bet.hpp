#ifndef BET_BET_HPP
#define BET_BET_HPP

#include "bet/data.hpp"
#include "bet/drivers.hpp"
#include "bet/harness.hpp"
#include "bet/metrics.hpp"
#include "bet/objective.hpp"
#include "bet/optim.hpp"

#endif  // BET_BET_HPP
