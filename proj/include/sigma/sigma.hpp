// Copyright 2026 The Sigma Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include "sigma/compiler.hpp"
#include "sigma/error.hpp"
#include "sigma/files.hpp"
#include "sigma/instruction.hpp"
#include "sigma/machine.hpp"
#include "sigma/migrate.hpp"
#include "sigma/pickle.hpp"
#include "sigma/reflect.hpp"
#include "sigma/representation.hpp"
#include "sigma/session.hpp"
#include "sigma/sexp.hpp"
#include "sigma/state.hpp"
#include "sigma/value.hpp"
