// Rough cost probe for one training-style step at the default model size.
#include "erlab/attribution.hpp"
#include "erlab/autodiff.hpp"
#include "erlab/data.hpp"
#include "erlab/model.hpp"
#include "erlab/rng.hpp"

#include <chrono>
#include <cstdio>

using namespace erlab;

int main() {
    ModelConfig cfg;
    cfg.vocab_size = 60;
    cfg.max_seq_len = 32;
    cfg.seed = 3;
    Model m = Model::init(cfg);

    Rng rng(1);
    std::vector<std::vector<int>> inputs;
    for (int i = 0; i < 64; ++i) {
        std::vector<int> ids{kClsId};
        const int len = rng.uniform_int(8, 24);
        for (int t = 0; t < len; ++t) ids.push_back(rng.uniform_int(4, 59));
        inputs.push_back(std::move(ids));
    }

    auto time_it = [&](const char* label, auto fn) {
        const auto t0 = std::chrono::steady_clock::now();
        for (const auto& ids : inputs) fn(ids);
        const auto t1 = std::chrono::steady_clock::now();
        const double us =
            std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count() /
            static_cast<double>(inputs.size());
        std::printf("%-28s %8.1f us/example\n", label, us);
    };

    time_it("forward only", [&](const std::vector<int>& ids) { (void)m.forward(ids); });

    time_it("forward + ce backward", [&](const std::vector<int>& ids) {
        auto out = m.forward(ids);
        auto loss = ad::cross_entropy(out.logits, 1);
        (void)ad::gradient(loss, m.params());
    });

    time_it("fwd + input grad + 2nd order", [&](const std::vector<int>& ids) {
        auto out = m.forward(ids);
        auto logit = ad::reshape(ad::slice(out.logits, 0, 1, 0, 1), std::vector<int>{});
        auto gx = ad::gradient_vars(logit, {out.embedded});
        auto sal = ad::l2_normalize(ad::abs_fn(ad::row_sum(ad::mul(out.embedded, gx[0]))));
        auto loss = ad::add(ad::cross_entropy(out.logits, 1), ad::mean_all(sal));
        (void)ad::gradient(loss, m.params());
    });

    time_it("all attribution maps", [&](const std::vector<int>& ids) {
        auto out = m.forward(ids);
        for (int l = 0; l < cfg.num_layers; ++l) {
            (void)attention_attribution(out, l);
            (void)rollout_attribution(out, l);
        }
        (void)input_x_gradient_from(out, m.predict(ids));
    });
    return 0;
}
