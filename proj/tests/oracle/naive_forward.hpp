#pragma once

#include <vector>

#include "simt/matrix.hpp"
#include "simt/model.hpp"

namespace simt::oracle {

// Brute-force reference for the prefix-to-prefix forward pass. For every
// target step i it re-encodes the source prefix x_{<= max readable} from
// scratch and re-runs the decoder on the target prefix y_{<i}, with
// explicit loops throughout — no code shared with the fast path beyond the
// parameter containers. readable_sets[i] holds the 1-based source positions
// visible to step i+1.
//
// The fast path documents its numeric recipe (ascending-index accumulation,
// softmax normalized by a single reciprocal, bias added after the matmul);
// this oracle follows the same recipe independently, which is what makes
// bitwise equality a meaningful assertion rather than a tolerance game.
Matrix<double> naive_forward(const ModelParams<double>& params,
                             const std::vector<TokenId>& src_ids,
                             const std::vector<TokenId>& tgt_in_ids,
                             const std::vector<std::vector<int>>& readable_sets);

}  // namespace simt::oracle
