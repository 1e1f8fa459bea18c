#include "pmdx/model.hpp"

#include <cmath>

#include "pmdx/guideline.hpp"
#include "pmdx/progressive.hpp"
#include "pmdx/rng.hpp"
#include "pmdx/textualize.hpp"

namespace pmdx {

// ---- ParamStore -------------------------------------------------------------

int ParamStore::add(std::string name, Tensor value) {
    if (find(name) >= 0) throw ConfigError("duplicate parameter name '" + name + "'");
    entries_.push_back(Entry{std::move(name), std::move(value)});
    return static_cast<int>(entries_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
    for (size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].name == name) return static_cast<int>(i);
    return -1;
}

size_t ParamStore::total_parameters() const {
    size_t n = 0;
    for (const Entry& e : entries_) n += e.value.data.size();
    return n;
}

void ParamStore::quantize_f32() {
    for (Entry& e : entries_)
        for (double& v : e.value.data) v = static_cast<double>(static_cast<float>(v));
}

// ---- init helpers -----------------------------------------------------------

namespace {

Tensor he_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / fan_in);
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

LinearSpec init_linear(ParamStore& ps, Rng& rng, const std::string& name, int out, int in) {
    LinearSpec s;
    s.W = ps.add(name + ".W", he_uniform({out, in}, in, rng));
    s.b = ps.add(name + ".b", Tensor({out}));
    return s;
}

MlpSpec init_mlp(ParamStore& ps, Rng& rng, const std::string& name, const std::vector<int>& dims) {
    MlpSpec m;
    for (size_t i = 0; i + 1 < dims.size(); ++i)
        m.layers.push_back(
            init_linear(ps, rng, name + ".l" + std::to_string(i), dims[i + 1], dims[i]));
    return m;
}

VolumeEncoderSpec init_volume_encoder(ParamStore& ps, Rng& rng, const std::string& name,
                                      const ModelConfig& cfg) {
    VolumeEncoderSpec enc;
    int cin = 1;
    int cout = cfg.conv_base_channels;
    for (int b = 0; b < cfg.conv_blocks; ++b) {
        LinearSpec blk;
        blk.W = ps.add(name + ".block" + std::to_string(b) + ".W",
                       he_uniform({cout, cin, 3, 3, 3}, cin * 27, rng));
        blk.b = ps.add(name + ".block" + std::to_string(b) + ".b", Tensor({cout}));
        enc.blocks.push_back(blk);
        cin = cout;
        cout *= 2;
    }
    enc.proj = init_linear(ps, rng, name + ".proj", cfg.d, cin);
    return enc;
}

} // namespace

// ---- Model ------------------------------------------------------------------

Model::Model(ModelConfig cfg, AblationFlags flags, uint64_t seed, TextEncoder encoder)
    : cfg_(std::move(cfg)), flags_(flags), encoder_(std::move(encoder)) {
    cfg_.validate();
    if (encoder_.dim() != cfg_.d_text)
        throw ConfigError("text encoder dimension " + std::to_string(encoder_.dim()) +
                          " != configured d_text " + std::to_string(cfg_.d_text));

    Rng rng(seed);

    const std::vector<int> adapter_dims{cfg_.d_text, cfg_.adapter_hidden[0], cfg_.adapter_hidden[1],
                                        cfg_.d_a};
    if (cfg_.shared_adapter) {
        adapters_.push_back(init_mlp(params_, rng, "adapter", adapter_dims));
    } else {
        adapters_.push_back(init_mlp(params_, rng, "adapter_p", adapter_dims));
        adapters_.push_back(init_mlp(params_, rng, "adapter_h", adapter_dims));
        adapters_.push_back(init_mlp(params_, rng, "adapter_d", adapter_dims));
    }
    common_enc_ = init_mlp(params_, rng, "common", {cfg_.d_a, cfg_.disent_hidden, cfg_.d_c});
    specific_enc_ = init_mlp(params_, rng, "specific", {cfg_.d_a, cfg_.disent_hidden, cfg_.d_s});
    stage1_proj_ = init_linear(params_, rng, "stage1_proj", cfg_.d, 3 * cfg_.d_a);
    phi2_ = init_volume_encoder(params_, rng, "phi2", cfg_);
    phi3_ = init_volume_encoder(params_, rng, "phi3", cfg_);

    {
        Tensor q({cfg_.query_count, cfg_.d});
        const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.d));
        for (double& v : q.data) v = rng.uniform(-bound, bound);
        fusion_.Q = params_.add("fusion.Q", std::move(q));
        fusion_.wq = init_linear(params_, rng, "fusion.wq", cfg_.d, cfg_.d);
        fusion_.wk = init_linear(params_, rng, "fusion.wk", cfg_.d, cfg_.d);
        fusion_.wv = init_linear(params_, rng, "fusion.wv", cfg_.d, cfg_.d);
        fusion_.wo = init_linear(params_, rng, "fusion.wo", cfg_.d, cfg_.d);
        fusion_.ffw = init_mlp(params_, rng, "fusion.ffw", {cfg_.d, cfg_.ffw_mult * cfg_.d, cfg_.d});
    }
    crit_proj_ = init_linear(params_, rng, "criteria.proj", cfg_.d, cfg_.d_text);
    if (flags_.no_fusion)
        nofusion_proj_ = init_linear(params_, rng, "nofusion_proj", cfg_.d, 3 * cfg_.d);

    const auto& corpus = guideline_corpus();
    for (const GuidelineCriterion& c : corpus)
        criterion_text_emb_[static_cast<size_t>(c.subtype)] = encoder_.encode(c.text);
}

Model::Pass Model::begin_pass(ad::Tape& tape) const {
    Pass p;
    p.tape = &tape;
    p.leaves.reserve(static_cast<size_t>(params_.count()));
    for (int i = 0; i < params_.count(); ++i)
        p.leaves.push_back(ad::make_leaf(tape, params_.value(i)));
    return p;
}

const MlpSpec& Model::adapter_for(char component) const {
    if (cfg_.shared_adapter) return adapters_[0];
    switch (component) {
        case 'p': return adapters_[0];
        case 'h': return adapters_[1];
        case 'd': return adapters_[2];
    }
    throw InputError("unknown text component");
}

ad::Var Model::run_mlp(Pass& p, const MlpSpec& mlp, ad::Var x) const {
    ad::Var h = x;
    for (size_t i = 0; i < mlp.layers.size(); ++i) {
        h = ad::linear(h, p.leaf(mlp.layers[i].W), p.leaf(mlp.layers[i].b));
        if (i + 1 < mlp.layers.size()) h = ad::relu(h);
    }
    return h;
}

ad::Var Model::adapt(Pass& p, const Tensor& text_embedding, char component) const {
    if (text_embedding.size() != cfg_.d_text)
        throw ShapeError("adapt: embedding size " + std::to_string(text_embedding.size()) +
                         " != d_text " + std::to_string(cfg_.d_text));
    return run_mlp(p, adapter_for(component), ad::make_const(*p.tape, text_embedding));
}

std::pair<ad::Var, ad::Var> Model::disentangle(Pass& p, ad::Var adapted) const {
    if (adapted.val().size() != cfg_.d_a)
        throw ShapeError("disentangle: input size != d_a");
    return {run_mlp(p, common_enc_, adapted), run_mlp(p, specific_enc_, adapted)};
}

ad::Var Model::assemble_stage1(Pass& p, const std::array<std::optional<ad::Var>, 3>& adapted,
                               TextForward* tf) const {
    static const char comps[3] = {'p', 'h', 'd'};
    bool any = false;
    std::vector<ad::Var> blocks;
    for (int i = 0; i < 3; ++i) {
        if (!adapted[static_cast<size_t>(i)]) {
            blocks.push_back(ad::make_const(*p.tape, Tensor({cfg_.d_a})));
            continue;
        }
        any = true;
        ad::Var f = *adapted[static_cast<size_t>(i)];
        if (flags_.no_disentangle) {
            blocks.push_back(f);
        } else {
            auto [c, s] = disentangle(p, f);
            if (tf) {
                tf->commons.push_back({comps[i], c});
                tf->specifics.push_back({comps[i], s});
            }
            blocks.push_back(ad::concat({c, s}));
        }
    }
    if (!any) throw InputError("stage 1 requires at least one tabular text component");
    return ad::linear(ad::concat(blocks), p.leaf(stage1_proj_.W), p.leaf(stage1_proj_.b));
}

Model::TextForward Model::stage1_feature(Pass& p, const SubjectInputs& in) const {
    TextForward tf;
    std::array<std::optional<ad::Var>, 3> adapted;
    if (in.e_p) adapted[0] = adapt(p, *in.e_p, 'p');
    if (in.e_h) adapted[1] = adapt(p, *in.e_h, 'h');
    if (in.e_d) adapted[2] = adapt(p, *in.e_d, 'd');
    tf.f1 = assemble_stage1(p, adapted, &tf);
    return tf;
}

ad::Var Model::run_volume_encoder(Pass& p, const VolumeEncoderSpec& enc, ad::Var vol) const {
    ad::Var h = vol;
    for (const LinearSpec& blk : enc.blocks) {
        h = ad::conv3d(h, p.leaf(blk.W), p.leaf(blk.b));
        h = ad::instance_norm(h);
        h = ad::relu(h);
        h = ad::avgpool3d(h);
    }
    return ad::linear(ad::global_avg_pool(h), p.leaf(enc.proj.W), p.leaf(enc.proj.b));
}

ad::Var Model::encode_volume_graph(Pass& p, const Tensor& standardized, int stage) const {
    if (stage != 2 && stage != 3) throw InputError("volume encoders exist for stages 2 and 3 only");
    if (standardized.rank() != 4 || standardized.dim(0) != 1 ||
        standardized.dim(1) != cfg_.volume_shape[0] || standardized.dim(2) != cfg_.volume_shape[1] ||
        standardized.dim(3) != cfg_.volume_shape[2])
        throw ShapeError("volume does not match configured shape");
    return run_volume_encoder(p, stage == 2 ? phi2_ : phi3_,
                              ad::make_const(*p.tape, standardized));
}

ad::Var Model::fuse(Pass& p, const std::vector<ad::Var>& stage_features) const {
    if (stage_features.empty()) throw InputError("fuse: need at least one stage feature");
    if (stage_features.size() > 3) throw InputError("fuse: at most three stage features");
    for (const ad::Var& f : stage_features)
        if (f.val().size() != cfg_.d) throw ShapeError("fuse: feature dimension != d");
    ad::Tape& t = *p.tape;

    if (flags_.no_fusion) {
        // concatenation + linear projection stand-in for the attention block
        std::vector<ad::Var> parts = stage_features;
        while (parts.size() < 3) parts.push_back(ad::make_const(t, Tensor({cfg_.d})));
        return ad::linear(ad::concat(parts), p.leaf(nofusion_proj_.W), p.leaf(nofusion_proj_.b));
    }

    const int dh = cfg_.d / cfg_.heads;
    ad::Var Qmat = p.leaf(fusion_.Q);

    // K = V = [f^{1:k}, Q]: modality features plus every query token.
    std::vector<ad::Var> tokens = stage_features;
    for (int qi = 0; qi < cfg_.query_count; ++qi) tokens.push_back(ad::row(Qmat, qi));
    ad::Var T = ad::stack_rows(tokens);
    ad::Var K = ad::linear_rows(T, p.leaf(fusion_.wk.W), p.leaf(fusion_.wk.b));
    ad::Var V = ad::linear_rows(T, p.leaf(fusion_.wv.W), p.leaf(fusion_.wv.b));

    std::vector<ad::Var> outputs;
    for (int qi = 0; qi < cfg_.query_count; ++qi) {
        ad::Var qtok = ad::row(Qmat, qi);
        ad::Var q = ad::linear(qtok, p.leaf(fusion_.wq.W), p.leaf(fusion_.wq.b));
        std::vector<ad::Var> head_ctx;
        for (int h = 0; h < cfg_.heads; ++h) {
            ad::Var qh = ad::slice(q, h * dh, dh);
            ad::Var Kh = ad::slice_cols(K, h * dh, dh);
            ad::Var Vh = ad::slice_cols(V, h * dh, dh);
            ad::Var scores = ad::scale(ad::matvec(Kh, qh), 1.0 / std::sqrt(static_cast<double>(dh)));
            ad::Var attn = ad::softmax(scores);
            head_ctx.push_back(ad::matvec_t(Vh, attn));
        }
        ad::Var att = ad::linear(ad::concat(head_ctx), p.leaf(fusion_.wo.W), p.leaf(fusion_.wo.b));
        ad::Var pre = ad::add(qtok, att);
        outputs.push_back(ad::add(qtok, run_mlp(p, fusion_.ffw, pre)));
    }
    if (outputs.size() == 1) return outputs[0];
    ad::Var sum = outputs[0];
    for (size_t i = 1; i < outputs.size(); ++i) sum = ad::add(sum, outputs[i]);
    return ad::scale(sum, 1.0 / static_cast<double>(outputs.size()));
}

std::array<ad::Var, 4> Model::criteria(Pass& p) const {
    std::array<ad::Var, 4> out;
    for (int j = 0; j < 4; ++j) {
        ad::Var e = ad::make_const(*p.tape, criterion_text_emb_[static_cast<size_t>(j)]);
        out[static_cast<size_t>(j)] =
            ad::l2_normalize(ad::linear(e, p.leaf(crit_proj_.W), p.leaf(crit_proj_.b)));
    }
    return out;
}

ad::Var Model::contrastive_logits(Pass& p, ad::Var f_r, const std::array<ad::Var, 4>& crit) const {
    std::vector<ad::Var> logits;
    for (int j = 0; j < 4; ++j)
        logits.push_back(ad::scale(ad::cosine(f_r, crit[static_cast<size_t>(j)]), 1.0 / cfg_.tau));
    return ad::concat(logits);
}

// ---- value-level API ---------------------------------------------------------

Tensor standardize_volume(const Volume& v) {
    if (!v.valid()) throw ShapeError("volume data does not match its shape");
    Tensor out({1, v.shape[0], v.shape[1], v.shape[2]});
    const int n = v.voxels();
    double mu = 0.0;
    for (int i = 0; i < n; ++i) mu += v.data[static_cast<size_t>(i)];
    mu /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = v.data[static_cast<size_t>(i)] - mu;
        var += d * d;
    }
    var /= n;
    const double inv = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
    for (int i = 0; i < n; ++i) out[i] = (v.data[static_cast<size_t>(i)] - mu) * inv;
    return out;
}

SubjectInputs Model::prepare_inputs(const SubjectRecord& rec, int template_id) const {
    SubjectInputs in;
    in.rec = &rec;
    const TextBundle texts = textualize(rec, template_id);
    if (texts.t_p) in.e_p = encoder_.encode(*texts.t_p);
    if (texts.t_h) in.e_h = encoder_.encode(*texts.t_h);
    if (texts.t_d) in.e_d = encoder_.encode(*texts.t_d);
    if (rec.mri) in.mri = standardize_volume(*rec.mri);
    if (rec.pet) in.pet = standardize_volume(*rec.pet);
    return in;
}

Tensor Model::encode_volume(const Volume& v, int stage) const {
    ad::Tape tape;
    Pass p = begin_pass(tape);
    return encode_volume_graph(p, standardize_volume(v), stage).val();
}

std::vector<StageScore> Model::score_stages(const SubjectInputs& in, int max_stage) const {
    if (!in.rec) throw InputError("score_stages: unprepared inputs");
    ad::Tape tape;
    Pass p = begin_pass(tape);
    const auto crit = criteria(p);

    const int top = std::min(max_stage, in.rec->max_stage());
    std::vector<ad::Var> feats;
    feats.push_back(stage1_feature(p, in).f1);

    std::vector<StageScore> out;
    for (int k = 1; k <= top; ++k) {
        if (k == 2) feats.push_back(encode_volume_graph(p, *in.mri, 2));
        if (k == 3) feats.push_back(encode_volume_graph(p, *in.pet, 3));
        ad::Var f_r = fuse(p, feats);
        ad::Var probs = ad::softmax(contrastive_logits(p, f_r, crit));
        StageScore s;
        s.stage = k;
        for (int j = 0; j < 4; ++j) s.probs[static_cast<size_t>(j)] = probs.val()[j];
        s.confidence = confidence(s.probs);
        out.push_back(s);
    }
    return out;
}

Tensor Model::criteria_matrix() const {
    ad::Tape tape;
    Pass p = begin_pass(tape);
    const auto crit = criteria(p);
    Tensor m({4, cfg_.d});
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < cfg_.d; ++i) m.at(j, i) = crit[static_cast<size_t>(j)].val()[i];
    return m;
}

} // namespace pmdx
