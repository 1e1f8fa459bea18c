#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pmdx/errors.hpp"
#include "pmdx/synth.hpp"

namespace pmdx {

struct ModelConfig {
    int d_text = 512; // frozen text embedding width
    int d_a = 128;    // adapter output
    int d_c = 64;     // common part
    int d_s = 64;     // specific part
    int d = 128;      // shared stage dimension

    std::vector<int> adapter_hidden{256, 256}; // 4 affine layers total
    int disent_hidden = 128;                   // hidden width of the 2-layer split encoders

    int heads = 4;
    int ffw_mult = 4;
    int query_count = 1;

    int conv_blocks = 3;
    int conv_base_channels = 4;
    std::array<int, 3> volume_shape{8, 8, 8};

    double tau = 0.1;          // guideline contrastive temperature
    bool shared_adapter = true; // one adapter across t_p/t_h/t_d

    void validate() const;
};

struct PolicyConfig {
    double theta1 = 0.3;
    double theta2 = 0.3;
    double delta1 = 1.0;
    double delta2 = 1.5;

    double theta(int stage) const {
        if (stage == 1) return theta1;
        if (stage == 2) return theta2;
        throw InputError("theta only defined for stages 1 and 2");
    }
    double delta(int stage) const {
        if (stage == 1) return delta1;
        if (stage == 2) return delta2;
        throw InputError("delta only defined for stages 1 and 2");
    }
    void validate() const;
};

struct AblationFlags {
    bool no_disentangle = false;
    bool no_alignment = false;
    bool no_progressive = false;
    bool no_fusion = false;

    bool any() const { return no_disentangle || no_alignment || no_progressive || no_fusion; }
};

struct TrainConfig {
    ModelConfig model;
    PolicyConfig policy;
    SynthConfig synth;
    AblationFlags ablation;

    double learning_rate = 1e-4;
    int epochs = 100;
    int batch_size = 16;
    uint64_t seed = 1;
    int template_id = 3;
    int eval_every = 1; // validation cadence in epochs; 0 disables

    // Eq-5 variant: only reward confidence when the current argmax is right.
    bool confidence_penalty_requires_correct = false;
    // Score AUC from the forced stage-3 distribution instead of the
    // decision-stage one.
    bool auc_from_final_stage = false;

    std::string external_embeddings; // optional JSONL of precomputed text vectors

    void validate() const;
};

std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::string& path);
void save_config(const TrainConfig& cfg, const std::string& path);

} // namespace pmdx
