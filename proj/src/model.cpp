#include "erlab/model.hpp"
#include "erlab/data.hpp"
#include "erlab/rng.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace erlab {

using ad::Var;

namespace {

constexpr double kInitStd = 0.05;
constexpr int kCheckpointVersion = 1;

void validate_config(const ModelConfig& c) {
    if (c.num_layers < 1 || c.num_heads < 1 || c.d_model < 1 || c.d_ff < 1 ||
        c.vocab_size < 5 || c.num_classes < 2) {
        throw std::invalid_argument("model config: nonpositive or missing dimension");
    }
    if (c.d_model % c.num_heads != 0) {
        throw std::invalid_argument("model config: d_model not divisible by num_heads");
    }
    if (c.max_seq_len < 2) {
        throw std::invalid_argument("model config: max_seq_len must be at least 2");
    }
}

Tensor gaussian_tensor(std::vector<int> shape, Rng& rng, double stddev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.values) v = rng.gaussian(0.0, stddev);
    return t;
}

}  // namespace

void Model::register_param(const std::string& name, Tensor value) {
    index_[name] = params_.size();
    names_.push_back(name);
    params_.push_back(Var::leaf(std::move(value)));
}

const Var& Model::param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return params_[it->second];
}

Model Model::init(const ModelConfig& config) {
    validate_config(config);
    Model m;
    m.config_ = config;
    Rng rng(derive_seed(config.seed, "model-init"));
    const int d = config.d_model;

    m.register_param("embed.tokens", gaussian_tensor({config.vocab_size, d}, rng, kInitStd));
    m.register_param("embed.positions", gaussian_tensor({config.max_seq_len, d}, rng, kInitStd));
    m.register_param("embed.ln.gain", Tensor::full({1, d}, 1.0));
    m.register_param("embed.ln.bias", Tensor::zeros({1, d}));

    for (int l = 0; l < config.num_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        for (const char* w : {"wq", "wk", "wv", "wo"}) {
            m.register_param(p + w, gaussian_tensor({d, d}, rng, kInitStd));
        }
        for (const char* b : {"bq", "bk", "bv", "bo"}) {
            m.register_param(p + b, Tensor::zeros({1, d}));
        }
        m.register_param(p + "ln1.gain", Tensor::full({1, d}, 1.0));
        m.register_param(p + "ln1.bias", Tensor::zeros({1, d}));
        m.register_param(p + "ff.w1", gaussian_tensor({d, config.d_ff}, rng, kInitStd));
        m.register_param(p + "ff.b1", Tensor::zeros({1, config.d_ff}));
        m.register_param(p + "ff.w2", gaussian_tensor({config.d_ff, d}, rng, kInitStd));
        m.register_param(p + "ff.b2", Tensor::zeros({1, d}));
        m.register_param(p + "ln2.gain", Tensor::full({1, d}, 1.0));
        m.register_param(p + "ln2.bias", Tensor::zeros({1, d}));
    }

    m.register_param("pooler.w", gaussian_tensor({d, d}, rng, kInitStd));
    m.register_param("pooler.b", Tensor::zeros({1, d}));
    m.register_param("head.w", gaussian_tensor({d, config.num_classes}, rng, kInitStd));
    m.register_param("head.b", Tensor::zeros({1, config.num_classes}));
    return m;
}

ModelOutput Model::forward(const std::vector<int>& ids) const {
    if (ids.empty()) throw std::invalid_argument("forward: empty sequence");
    if (ids[0] != kClsId) throw std::invalid_argument("forward: sequence must start with CLS");
    const int seq = static_cast<int>(ids.size());
    if (seq > config_.max_seq_len) throw std::invalid_argument("forward: sequence too long");
    for (int id : ids) {
        if (id < 0 || id >= config_.vocab_size) {
            throw std::invalid_argument("forward: token id outside vocabulary");
        }
    }

    const int d = config_.d_model;
    const int heads = config_.num_heads;
    const int dh = d / heads;

    ModelOutput out;
    out.ids = ids;
    out.seq_len = seq;

    out.embedded = ad::embedding_gather(param("embed.tokens"), ids);
    std::vector<int> positions(seq);
    for (int i = 0; i < seq; ++i) positions[i] = i;
    Var x = ad::add(out.embedded, ad::embedding_gather(param("embed.positions"), positions));
    x = ad::layer_norm_rows(x, param("embed.ln.gain"), param("embed.ln.bias"));

    // additive attention mask: PAD columns get a large negative logit
    bool any_pad = false;
    Tensor mask_row = Tensor::zeros({1, seq});
    for (int i = 0; i < seq; ++i) {
        if (ids[i] == kPadId) {
            mask_row.at(0, i) = -1e9;
            any_pad = true;
        }
    }
    Var mask = any_pad ? ad::bcast_row(Var::constant(mask_row), seq) : Var();

    for (int l = 0; l < config_.num_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        Var q = ad::add(ad::matmul(x, param(p + "wq")), ad::bcast_row(param(p + "bq"), seq));
        Var k = ad::add(ad::matmul(x, param(p + "wk")), ad::bcast_row(param(p + "bk"), seq));
        Var v = ad::add(ad::matmul(x, param(p + "wv")), ad::bcast_row(param(p + "bv"), seq));

        std::vector<Var> head_attn;
        Var ctx;
        for (int h = 0; h < heads; ++h) {
            Var qh = ad::slice(q, 0, seq, h * dh, dh);
            Var kh = ad::slice(k, 0, seq, h * dh, dh);
            Var vh = ad::slice(v, 0, seq, h * dh, dh);
            Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), 1.0 / std::sqrt(dh));
            if (any_pad) scores = ad::add(scores, mask);
            Var a = ad::softmax_rows(scores);
            head_attn.push_back(a);
            Var ctx_h = ad::pad(ad::matmul(a, vh), seq, d, 0, h * dh);
            ctx = ctx.defined() ? ad::add(ctx, ctx_h) : ctx_h;
        }
        out.attentions.push_back(std::move(head_attn));

        Var attn_out =
            ad::add(ad::matmul(ctx, param(p + "wo")), ad::bcast_row(param(p + "bo"), seq));
        Var h1 = ad::layer_norm_rows(ad::add(x, attn_out), param(p + "ln1.gain"),
                                     param(p + "ln1.bias"));
        Var ff = ad::add(ad::matmul(ad::relu(ad::add(ad::matmul(h1, param(p + "ff.w1")),
                                                     ad::bcast_row(param(p + "ff.b1"), seq))),
                                    param(p + "ff.w2")),
                         ad::bcast_row(param(p + "ff.b2"), seq));
        x = ad::layer_norm_rows(ad::add(h1, ff), param(p + "ln2.gain"), param(p + "ln2.bias"));
        out.hiddens.push_back(x);
    }

    Var cls = ad::slice(x, 0, 1, 0, d);
    Var pooled = ad::tanh_fn(ad::add(ad::matmul(cls, param("pooler.w")), param("pooler.b")));
    out.logits = ad::add(ad::matmul(pooled, param("head.w")), param("head.b"));
    return out;
}

std::vector<double> Model::predict_proba(const std::vector<int>& ids) const {
    const ModelOutput out = forward(ids);
    const Tensor probs = ad::softmax_rows(out.logits).detached();
    return probs.values;
}

int Model::predict(const std::vector<int>& ids) const {
    const std::vector<double> p = predict_proba(ids);
    int best = 0;
    for (size_t i = 1; i < p.size(); ++i) {
        if (p[i] > p[best]) best = static_cast<int>(i);
    }
    return best;
}

std::vector<Tensor> Model::snapshot() const {
    std::vector<Tensor> values;
    values.reserve(params_.size());
    for (const Var& p : params_) values.push_back(p.detached());
    return values;
}

void Model::restore(const std::vector<Tensor>& values) {
    if (values.size() != params_.size()) {
        throw std::invalid_argument("restore: parameter count mismatch");
    }
    for (size_t i = 0; i < values.size(); ++i) {
        if (!params_[i].val().same_shape(values[i])) {
            throw std::invalid_argument("restore: shape mismatch at " + names_[i]);
        }
        params_[i].node()->value.values = values[i].values;
    }
}

void Model::save(const std::string& path) const {
    nlohmann::ordered_json j;
    j["format_version"] = kCheckpointVersion;
    j["config"] = {{"num_layers", config_.num_layers}, {"num_heads", config_.num_heads},
                   {"d_model", config_.d_model},       {"d_ff", config_.d_ff},
                   {"vocab_size", config_.vocab_size}, {"max_seq_len", config_.max_seq_len},
                   {"num_classes", config_.num_classes}, {"seed", config_.seed}};
    nlohmann::ordered_json params = nlohmann::ordered_json::array();
    for (size_t i = 0; i < params_.size(); ++i) {
        nlohmann::ordered_json p;
        p["name"] = names_[i];
        p["shape"] = params_[i].shape();
        p["values"] = params_[i].val().values;
        params.push_back(std::move(p));
    }
    j["params"] = std::move(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << j.dump() << "\n";
}

Model Model::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("checkpoint " + path + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.contains("format_version") || j["format_version"].get<int>() != kCheckpointVersion) {
        throw std::runtime_error("checkpoint " + path + ": unsupported format version");
    }
    ModelConfig c;
    const auto& jc = j.at("config");
    c.num_layers = jc.at("num_layers").get<int>();
    c.num_heads = jc.at("num_heads").get<int>();
    c.d_model = jc.at("d_model").get<int>();
    c.d_ff = jc.at("d_ff").get<int>();
    c.vocab_size = jc.at("vocab_size").get<int>();
    c.max_seq_len = jc.at("max_seq_len").get<int>();
    c.num_classes = jc.at("num_classes").get<int>();
    c.seed = jc.at("seed").get<uint64_t>();

    Model m = Model::init(c);
    const auto& jp = j.at("params");
    if (jp.size() != m.params_.size()) {
        throw std::runtime_error("checkpoint " + path + ": parameter count mismatch");
    }
    for (size_t i = 0; i < jp.size(); ++i) {
        const std::string name = jp[i].at("name").get<std::string>();
        if (name != m.names_[i]) {
            throw std::runtime_error("checkpoint " + path + ": unexpected parameter " + name);
        }
        Tensor t(jp[i].at("shape").get<std::vector<int>>(),
                 jp[i].at("values").get<std::vector<double>>());
        if (!m.params_[i].val().same_shape(t)) {
            throw std::runtime_error("checkpoint " + path + ": shape mismatch at " + name);
        }
        m.params_[i].node()->value.values = std::move(t.values);
    }
    return m;
}

}  // namespace erlab
