#pragma once

#include "nhps/rng.hpp"
#include "nhps/math.hpp"
#include "nhps/event.hpp"
#include "nhps/ctlstm.hpp"
#include "nhps/grid.hpp"
#include "nhps/nhp.hpp"
#include "nhps/missingness.hpp"
#include "nhps/proposal.hpp"
#include "nhps/smc.hpp"
#include "nhps/otd.hpp"
#include "nhps/decoder.hpp"
#include "nhps/training.hpp"
#include "nhps/checkpoint.hpp"
#include "nhps/io.hpp"
