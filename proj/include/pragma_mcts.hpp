#pragma once

#include "pragma_mcts/baselines.hpp"
#include "pragma_mcts/error.hpp"
#include "pragma_mcts/eval.hpp"
#include "pragma_mcts/harness.hpp"
#include "pragma_mcts/loop_model.hpp"
#include "pragma_mcts/mcts.hpp"
#include "pragma_mcts/process.hpp"
#include "pragma_mcts/record.hpp"
#include "pragma_mcts/reward.hpp"
#include "pragma_mcts/rng.hpp"
#include "pragma_mcts/session.hpp"
#include "pragma_mcts/space.hpp"
