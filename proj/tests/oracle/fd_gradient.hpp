#pragma once

#include <vector>

#include "simt/masking.hpp"
#include "simt/model.hpp"

namespace simt::oracle {

// Central-difference gradient of the per-token (mean) loss with respect to
// every scalar parameter, differentiating the production forward pass
// numerically. Double precision only; the returned container has the
// parameter shapes.
ModelParams<double> fd_gradient(const ModelParams<double>& params,
                                const std::vector<TokenId>& src_ids,
                                const std::vector<TokenId>& tgt_in_ids,
                                const std::vector<TokenId>& gold_ids, const MaskSet& mask,
                                double label_smoothing, double h);

}  // namespace simt::oracle
