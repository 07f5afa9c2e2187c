// Copyright 2026 The Reload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header.

#ifndef RELOAD_HPP_
#define RELOAD_HPP_

#include "reload/baselines.hpp"
#include "reload/checkpoint.hpp"
#include "reload/common.hpp"
#include "reload/dataset.hpp"
#include "reload/harness.hpp"
#include "reload/init.hpp"
#include "reload/io.hpp"
#include "reload/metrics.hpp"
#include "reload/model.hpp"
#include "reload/network.hpp"
#include "reload/reload.hpp"
#include "reload/tensor.hpp"
#include "reload/training.hpp"

#endif  // RELOAD_HPP_
