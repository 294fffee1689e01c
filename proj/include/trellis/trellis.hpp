// Copyright 2026 The trellis authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "trellis/common.hpp"
#include "trellis/eval.hpp"
#include "trellis/feature_structure.hpp"
#include "trellis/grammar.hpp"
#include "trellis/lattice.hpp"
#include "trellis/packed_tree.hpp"
#include "trellis/pipeline.hpp"
#include "trellis/prosody.hpp"
#include "trellis/semparser.hpp"
#include "trellis/stylelm.hpp"
#include "trellis/synparser.hpp"
#include "trellis/treebank.hpp"
#include "trellis/word_bigram.hpp"
