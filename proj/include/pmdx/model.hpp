#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "pmdx/config.hpp"
#include "pmdx/subject.hpp"
#include "pmdx/tape.hpp"
#include "pmdx/text_encoder.hpp"

namespace pmdx {

// Ordered, named parameter tensors. The ordering is the checkpoint layout.
class ParamStore {
public:
    int add(std::string name, Tensor value);
    int count() const { return static_cast<int>(entries_.size()); }
    Tensor& value(int idx) { return entries_[static_cast<size_t>(idx)].value; }
    const Tensor& value(int idx) const { return entries_[static_cast<size_t>(idx)].value; }
    const std::string& name(int idx) const { return entries_[static_cast<size_t>(idx)].name; }
    int find(const std::string& name) const;
    size_t total_parameters() const;
    // Round every value through float32 so in-memory parameters match the
    // checkpoint representation exactly.
    void quantize_f32();

private:
    struct Entry {
        std::string name;
        Tensor value;
    };
    std::vector<Entry> entries_;
};

struct LinearSpec {
    int W = -1, b = -1;
};

struct MlpSpec {
    std::vector<LinearSpec> layers; // relu between layers, none after the last
};

struct VolumeEncoderSpec {
    std::vector<LinearSpec> blocks; // conv weights/bias per block
    LinearSpec proj;
};

struct FusionSpec {
    int Q = -1; // [query_count, d]
    LinearSpec wq, wk, wv, wo;
    MlpSpec ffw;
};

// Per-subject frozen inputs: text embeddings and standardized volumes.
struct SubjectInputs {
    const SubjectRecord* rec = nullptr;
    std::optional<Tensor> e_p, e_h, e_d; // [d_text]
    std::optional<Tensor> mri, pet;      // [1, D, H, W], per-volume z-scored
    bool has_text() const { return e_p || e_h || e_d; }
};

// One stage's classification outputs at value level.
struct StageScore {
    int stage = 0;
    std::array<double, 4> probs{};
    double confidence = 0.0;
};

// The trainable network: adapter, text disentanglement, stage-1 assembly,
// the two 3-D image encoders, the attention fusion block and the guideline
// projection head. All forward passes are built on an ad::Tape; training and
// inference share the same graph code.
class Model {
public:
    Model(ModelConfig cfg, AblationFlags flags, uint64_t seed, TextEncoder encoder);

    const ModelConfig& config() const { return cfg_; }
    const AblationFlags& flags() const { return flags_; }
    const TextEncoder& encoder() const { return encoder_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    int adapter_layer_count() const { return static_cast<int>(adapter_.layers.size()); }

    // Binds every parameter as a leaf on the tape; graph builders below pull
    // the leaves they need from this context.
    struct Pass {
        ad::Tape* tape = nullptr;
        std::vector<ad::Var> leaves;
        ad::Var leaf(int idx) const { return leaves[static_cast<size_t>(idx)]; }
    };
    Pass begin_pass(ad::Tape& tape) const;

    // ---- graph builders -----------------------------------------------------

    ad::Var adapt(Pass& p, const Tensor& text_embedding, char component) const;
    std::pair<ad::Var, ad::Var> disentangle(Pass& p, ad::Var adapted) const;

    struct TextForward {
        ad::Var f1;                                   // [d]
        std::vector<std::pair<char, ad::Var>> commons;   // present components
        std::vector<std::pair<char, ad::Var>> specifics;
    };
    TextForward stage1_feature(Pass& p, const SubjectInputs& in) const;

    ad::Var encode_volume_graph(Pass& p, const Tensor& standardized, int stage) const;
    ad::Var fuse(Pass& p, const std::vector<ad::Var>& stage_features) const;

    // Unit-norm criterion embeddings, projected from the frozen encoder
    // outputs; rebuilt per pass (the projection is trainable).
    std::array<ad::Var, 4> criteria(Pass& p) const;
    // cos(f_r, criterion_j) / tau for j = 0..3.
    ad::Var contrastive_logits(Pass& p, ad::Var f_r, const std::array<ad::Var, 4>& crit) const;

    // ---- value-level API ------------------------------------------------------

    // Frozen per-subject preprocessing (textualization + text encoding +
    // volume standardization).
    SubjectInputs prepare_inputs(const SubjectRecord& rec, int template_id) const;

    // Feature of a raw volume (with input standardization), stage 2 or 3.
    Tensor encode_volume(const Volume& v, int stage) const;

    // Per-stage classification scores up to max_stage (capped by the
    // subject's available modalities).
    std::vector<StageScore> score_stages(const SubjectInputs& in, int max_stage = 3) const;

    // Criterion embeddings as a [4, d] value matrix (for the pure scoring
    // functions and tests).
    Tensor criteria_matrix() const;

private:
    ModelConfig cfg_;
    AblationFlags flags_;
    TextEncoder encoder_;
    ParamStore params_;

    std::vector<MlpSpec> adapters_; // 1 if shared, else 3 (p, h, d)
    MlpSpec common_enc_, specific_enc_;
    LinearSpec stage1_proj_; // 3*d_a -> d
    VolumeEncoderSpec phi2_, phi3_;
    FusionSpec fusion_;
    LinearSpec crit_proj_; // d_text -> d
    LinearSpec nofusion_proj_; // 3d -> d, allocated only under no_fusion

    std::array<Tensor, 4> criterion_text_emb_; // frozen encoder outputs

    const MlpSpec& adapter_for(char component) const;
    ad::Var run_mlp(Pass& p, const MlpSpec& mlp, ad::Var x) const;
    ad::Var run_volume_encoder(Pass& p, const VolumeEncoderSpec& enc, ad::Var vol) const;
    // shared by stage1_feature; adapter outputs in (p, h, d) slots
    ad::Var assemble_stage1(Pass& p, const std::array<std::optional<ad::Var>, 3>& adapted,
                            TextForward* tf) const;

    friend class Checkpoint;
};

// Per-volume z-scoring into a [1, D, H, W] tensor.
Tensor standardize_volume(const Volume& v);

} // namespace pmdx
