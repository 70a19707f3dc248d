#include "cobo/config.hpp"

#include <algorithm>
#include <stdexcept>

namespace cobo {

int TrainConfig::effective_snapshot_every() const {
    if (snapshot_every > 0) return snapshot_every;
    return std::max(1, rounds / 20);
}

void TrainConfig::validate() const {
    if (!(eta > 0.0)) throw std::invalid_argument("train.eta must be positive");
    if (!(gamma > 0.0)) throw std::invalid_argument("train.gamma must be positive");
    if (rho < 0.0) throw std::invalid_argument("train.rho must be nonnegative");
    if (rounds < 0) throw std::invalid_argument("train.T must be nonnegative");
    if (batch < 1) throw std::invalid_argument("train.b must be >= 1");
    if (ditto_lambda < 0.0) throw std::invalid_argument("train.ditto_lambda must be nonnegative");
    if (ifca_k < 0) throw std::invalid_argument("train.ifca_k must be nonnegative");
    if (ifca_center_scale < 0.0) throw std::invalid_argument("train.ifca_center_scale must be nonnegative");
    if (snapshot_every < 0) throw std::invalid_argument("train.snapshot_every must be nonnegative");
    if (!(finetune_split > 0.0) || !(finetune_split < 1.0)) {
        throw std::invalid_argument("train.finetune_split must lie in (0, 1)");
    }
    if (init_scale < 0.0) throw std::invalid_argument("train.init_scale must be nonnegative");
    if (strategy.kind == SamplingStrategy::Kind::Constant && strategy.p > 1.0) {
        throw std::invalid_argument("train.strategy.p must be a probability");
    }
    if (strategy.switch_fraction <= 0.0 || strategy.switch_fraction >= 1.0) {
        throw std::invalid_argument("train.strategy.switch_fraction must lie in (0, 1)");
    }
}

}  // namespace cobo
