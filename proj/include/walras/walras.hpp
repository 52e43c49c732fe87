#pragma once

// Core library: cost models, both pricing mechanisms, the reference oracle
// and the message-passing simulator. File formats live in instance_io.hpp
// (needs yaml-cpp) and report_io.hpp.

#include "walras/market.hpp"
#include "walras/tatonnement.hpp"
#include "walras/decentral.hpp"
#include "walras/oracle.hpp"
#include "walras/protocol.hpp"
