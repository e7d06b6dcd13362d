// Copyright 2026 The spdq Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "spdq/mdp.hpp"

namespace spdq {

/// Built-in two-state, two-action benchmark MDP (discount 0.9, sigma 3).
inline MdpModel two_state_mdp() {
    MdpModel model;
    model.n_states = 2;
    model.n_actions = 2;
    model.discount = 0.9;
    model.sigma = 3.0;
    model.transitions.resize(2);
    model.transitions[0] = (Matrix(2, 2) << 0.2, 0.8, 0.3, 0.7).finished();
    model.transitions[1] = (Matrix(2, 2) << 0.5, 0.5, 0.7, 0.3).finished();
    // r(s, a): action 1 pays [3, 1] over states, action 2 pays [2, 1].
    model.rewards = RewardModel::deterministic((Matrix(2, 2) << 3.0, 2.0, 1.0, 1.0).finished());
    model.validate();
    return model;
}

/// Behavior policy used with the two-state benchmark.
inline StochasticPolicy two_state_behavior() {
    return {(Matrix(2, 2) << 0.2, 0.8, 0.7, 0.3).finished()};
}

/// Initial state distribution used with the two-state benchmark.
inline Vector two_state_initial_distribution() {
    return (Vector(2) << 0.4, 0.6).finished();
}

/// Built-in grid-world benchmark: uniform step rewards in [0, 0.2], goal
/// rewards in [1, 1.2], discount 0.9.
inline MdpModel grid_world_mdp(Index width, Index height) {
    return grid_world(width, height, {0.0, 0.2}, {1.0, 1.2}, 0.9);
}

} // namespace spdq
