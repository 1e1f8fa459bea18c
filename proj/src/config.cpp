#include "pmdx/config.hpp"

#include <fstream>

#include <json.hpp>

using nlohmann::json;

namespace pmdx {

void ModelConfig::validate() const {
    if (d_text <= 0 || d_a <= 0 || d_c <= 0 || d_s <= 0 || d <= 0)
        throw ConfigError("model dimensions must be positive");
    if (d_c + d_s != d_a)
        throw ConfigError("d_c + d_s must equal d_a (got " + std::to_string(d_c) + "+" +
                          std::to_string(d_s) + " vs " + std::to_string(d_a) + ")");
    if (adapter_hidden.size() != 2)
        throw ConfigError("adapter has 4 affine layers; expected exactly 2 hidden widths");
    for (int h : adapter_hidden)
        if (h <= 0) throw ConfigError("adapter hidden widths must be positive");
    if (disent_hidden <= 0) throw ConfigError("disent_hidden must be positive");
    if (heads <= 0 || d % heads != 0) throw ConfigError("heads must divide d");
    if (ffw_mult <= 0) throw ConfigError("ffw_mult must be positive");
    if (query_count <= 0) throw ConfigError("query_count must be positive");
    if (conv_blocks < 1) throw ConfigError("conv_blocks must be >= 1");
    if (conv_base_channels < 1) throw ConfigError("conv_base_channels must be >= 1");
    for (int v : volume_shape)
        if (v < 1) throw ConfigError("volume dimensions must be >= 1");
    if (tau <= 0.0) throw ConfigError("temperature tau must be > 0");
}

void PolicyConfig::validate() const {
    if (theta1 < 0.0 || theta1 > 1.0 || theta2 < 0.0 || theta2 > 1.0)
        throw ConfigError("thresholds must lie in [0,1]");
    if (delta1 <= 0.0 || delta2 <= 0.0) throw ConfigError("stage penalties must be > 0");
}

void TrainConfig::validate() const {
    model.validate();
    policy.validate();
    synth.validate();
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (template_id < 1 || template_id > 3) throw ConfigError("template_id must be 1, 2 or 3");
    if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
}

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void maybe_shape(const json& j, const char* key, std::array<int, 3>& out) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::vector<int>>();
    if (v.size() != 3) throw ConfigError(std::string(key) + " must have 3 entries");
    out = {v[0], v[1], v[2]};
}

json model_to_json(const ModelConfig& m) {
    return json{{"d_text", m.d_text},
                {"d_a", m.d_a},
                {"d_c", m.d_c},
                {"d_s", m.d_s},
                {"d", m.d},
                {"adapter_hidden", m.adapter_hidden},
                {"disent_hidden", m.disent_hidden},
                {"heads", m.heads},
                {"ffw_mult", m.ffw_mult},
                {"query_count", m.query_count},
                {"conv_blocks", m.conv_blocks},
                {"conv_base_channels", m.conv_base_channels},
                {"volume_shape", m.volume_shape},
                {"tau", m.tau},
                {"shared_adapter", m.shared_adapter}};
}

void model_from_json(const json& j, ModelConfig& m) {
    maybe(j, "d_text", m.d_text);
    maybe(j, "d_a", m.d_a);
    maybe(j, "d_c", m.d_c);
    maybe(j, "d_s", m.d_s);
    maybe(j, "d", m.d);
    maybe(j, "adapter_hidden", m.adapter_hidden);
    maybe(j, "disent_hidden", m.disent_hidden);
    maybe(j, "heads", m.heads);
    maybe(j, "ffw_mult", m.ffw_mult);
    maybe(j, "query_count", m.query_count);
    maybe(j, "conv_blocks", m.conv_blocks);
    maybe(j, "conv_base_channels", m.conv_base_channels);
    maybe_shape(j, "volume_shape", m.volume_shape);
    maybe(j, "tau", m.tau);
    maybe(j, "shared_adapter", m.shared_adapter);
}

} // namespace

std::string config_to_json(const TrainConfig& cfg) {
    json j;
    j["model"] = model_to_json(cfg.model);
    j["policy"] = {{"theta1", cfg.policy.theta1},
                   {"theta2", cfg.policy.theta2},
                   {"delta1", cfg.policy.delta1},
                   {"delta2", cfg.policy.delta2}};
    j["synth"] = {{"n", cfg.synth.n},
                  {"class_priors", cfg.synth.class_priors},
                  {"volume_shape", cfg.synth.volume_shape},
                  {"tabular_signal", cfg.synth.tabular_signal},
                  {"mri_signal", cfg.synth.mri_signal},
                  {"pet_signal", cfg.synth.pet_signal},
                  {"tabular_missing_rate", cfg.synth.tabular_missing_rate},
                  {"volume_noise", cfg.synth.volume_noise},
                  {"frac_mri", cfg.synth.frac_mri},
                  {"frac_pet", cfg.synth.frac_pet}};
    j["ablation"] = {{"no_disentangle", cfg.ablation.no_disentangle},
                     {"no_alignment", cfg.ablation.no_alignment},
                     {"no_progressive", cfg.ablation.no_progressive},
                     {"no_fusion", cfg.ablation.no_fusion}};
    j["train"] = {{"learning_rate", cfg.learning_rate},
                  {"epochs", cfg.epochs},
                  {"batch_size", cfg.batch_size},
                  {"seed", cfg.seed},
                  {"template_id", cfg.template_id},
                  {"eval_every", cfg.eval_every},
                  {"confidence_penalty_requires_correct", cfg.confidence_penalty_requires_correct},
                  {"auc_from_final_stage", cfg.auc_from_final_stage},
                  {"external_embeddings", cfg.external_embeddings}};
    return j.dump(2);
}

TrainConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    TrainConfig cfg; // defaults, overridden by present keys
    if (j.contains("model")) model_from_json(j.at("model"), cfg.model);
    if (j.contains("policy")) {
        const json& p = j.at("policy");
        maybe(p, "theta1", cfg.policy.theta1);
        maybe(p, "theta2", cfg.policy.theta2);
        if (p.contains("theta")) { // shared value shorthand
            cfg.policy.theta1 = p.at("theta").get<double>();
            cfg.policy.theta2 = cfg.policy.theta1;
        }
        maybe(p, "delta1", cfg.policy.delta1);
        maybe(p, "delta2", cfg.policy.delta2);
    }
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        maybe(s, "n", cfg.synth.n);
        if (s.contains("class_priors")) {
            const auto v = s.at("class_priors").get<std::vector<double>>();
            if (v.size() != 4) throw ConfigError("class_priors must have 4 entries");
            std::copy(v.begin(), v.end(), cfg.synth.class_priors.begin());
        }
        maybe_shape(s, "volume_shape", cfg.synth.volume_shape);
        maybe(s, "tabular_signal", cfg.synth.tabular_signal);
        maybe(s, "mri_signal", cfg.synth.mri_signal);
        maybe(s, "pet_signal", cfg.synth.pet_signal);
        maybe(s, "tabular_missing_rate", cfg.synth.tabular_missing_rate);
        maybe(s, "volume_noise", cfg.synth.volume_noise);
        maybe(s, "frac_mri", cfg.synth.frac_mri);
        maybe(s, "frac_pet", cfg.synth.frac_pet);
    }
    if (j.contains("ablation")) {
        const json& a = j.at("ablation");
        maybe(a, "no_disentangle", cfg.ablation.no_disentangle);
        maybe(a, "no_alignment", cfg.ablation.no_alignment);
        maybe(a, "no_progressive", cfg.ablation.no_progressive);
        maybe(a, "no_fusion", cfg.ablation.no_fusion);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        maybe(t, "learning_rate", cfg.learning_rate);
        maybe(t, "epochs", cfg.epochs);
        maybe(t, "batch_size", cfg.batch_size);
        maybe(t, "seed", cfg.seed);
        maybe(t, "template_id", cfg.template_id);
        maybe(t, "eval_every", cfg.eval_every);
        maybe(t, "confidence_penalty_requires_correct", cfg.confidence_penalty_requires_correct);
        maybe(t, "auc_from_final_stage", cfg.auc_from_final_stage);
        maybe(t, "external_embeddings", cfg.external_embeddings);
    }
    // model volume shape follows the synthesizer unless pinned explicitly
    if (j.contains("synth") && j.at("synth").contains("volume_shape") &&
        !(j.contains("model") && j.at("model").contains("volume_shape")))
        cfg.model.volume_shape = cfg.synth.volume_shape;
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json(text);
}

void save_config(const TrainConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write config file '" + path + "'");
    out << config_to_json(cfg) << "\n";
}

} // namespace pmdx
