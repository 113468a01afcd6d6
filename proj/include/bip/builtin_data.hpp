// SPDX-License-Identifier: Apache-2.0
//
// Data files compiled into the library (generated at configure time from
// themes/ and templates/).
#pragma once

#include <string_view>
#include <vector>

namespace bip::builtin {

/// Contents of themes/*.json, sorted by file name.
const std::vector<std::string_view>& theme_json();

/// Contents of templates/score_prompt_v1.txt.
std::string_view score_prompt_template();

}  // namespace bip::builtin
