// Copyright 2026 The dgmil Authors
//
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

#include "dgmil/common.hpp"
#include "dgmil/dataset.hpp"
#include "dgmil/distribution.hpp"
#include "dgmil/feature_io.hpp"
#include "dgmil/heads.hpp"
#include "dgmil/kmeans.hpp"
#include "dgmil/metrics.hpp"
#include "dgmil/model.hpp"
#include "dgmil/refinement.hpp"
#include "dgmil/synthetic.hpp"
