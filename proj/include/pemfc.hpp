// Copyright 2026 The pemfc-online Authors
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

// Umbrella header.

#include "pemfc/config.hpp"
#include "pemfc/diagnostics.hpp"
#include "pemfc/errors.hpp"
#include "pemfc/estimators.hpp"
#include "pemfc/filters.hpp"
#include "pemfc/harness.hpp"
#include "pemfc/linalg.hpp"
#include "pemfc/maps.hpp"
#include "pemfc/models.hpp"
#include "pemfc/regressors.hpp"
#include "pemfc/signals.hpp"
#include "pemfc/trace.hpp"
