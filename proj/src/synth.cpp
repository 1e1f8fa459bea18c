#include "pmdx/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pmdx/rng.hpp"

namespace pmdx {

void SynthConfig::validate() const {
    if (n <= 0) throw ConfigError("synth: cohort size must be positive");
    double prior_sum = 0.0;
    for (double p : class_priors) {
        if (p < 0.0) throw ConfigError("synth: class priors must be non-negative");
        prior_sum += p;
    }
    if (prior_sum <= 0.0) throw ConfigError("synth: class priors must not all be zero");
    for (int d : volume_shape)
        if (d < 1) throw ConfigError("synth: volume dimensions must be >= 1");
    if (tabular_signal < 0 || mri_signal < 0 || pet_signal < 0)
        throw ConfigError("synth: signal strengths must be >= 0");
    if (tabular_missing_rate < 0.0 || tabular_missing_rate > 1.0)
        throw ConfigError("synth: tabular_missing_rate must be in [0,1]");
    if (volume_noise < 0.0) throw ConfigError("synth: volume_noise must be >= 0");
    if (frac_mri < 0.0 || frac_mri > 1.0 || frac_pet < 0.0 || frac_pet > 1.0)
        throw ConfigError("synth: availability fractions must be in [0,1]");
    if (frac_pet > frac_mri)
        throw ConfigError("synth: frac_pet must not exceed frac_mri (nested tiers)");
}

namespace {

struct Latents {
    SubType label;
    bool in_vivo;    // carried by all AD sub-types, absent in controls
    int phenotype;   // 0 none, 1 memory-led, 2 posterior-led
    bool dementia;   // clinical dementia expressed in tabular data
};

struct Blob {
    double cz, cy, cx;
    double amp;
};

// Gaussian bump in normalized coordinates; sigma fixed, amplitude carries the
// class signal.
void add_blob(Volume& v, const Blob& b) {
    const double sigma = 0.22;
    const double inv = 1.0 / (2.0 * sigma * sigma);
    const int D = v.shape[0], H = v.shape[1], W = v.shape[2];
    int i = 0;
    for (int z = 0; z < D; ++z) {
        const double pz = D > 1 ? static_cast<double>(z) / (D - 1) : 0.5;
        for (int y = 0; y < H; ++y) {
            const double py = H > 1 ? static_cast<double>(y) / (H - 1) : 0.5;
            for (int x = 0; x < W; ++x, ++i) {
                const double px = W > 1 ? static_cast<double>(x) / (W - 1) : 0.5;
                const double d2 = (pz - b.cz) * (pz - b.cz) + (py - b.cy) * (py - b.cy) +
                                  (px - b.cx) * (px - b.cx);
                v.data[static_cast<size_t>(i)] += static_cast<float>(b.amp * std::exp(-d2 * inv));
            }
        }
    }
}

Volume make_volume(const std::array<int, 3>& shape, double noise, const std::vector<Blob>& blobs,
                   Rng& rng) {
    Volume v;
    v.shape = shape;
    v.data.resize(static_cast<size_t>(v.voxels()));
    for (float& f : v.data) f = static_cast<float>(rng.normal(0.0, noise));
    for (const Blob& b : blobs) add_blob(v, b);
    return v;
}

// Ordinal grid draw where the class-conditional distribution fades to a
// shared neutral one as the signal strength goes to zero.
double dementia_grade(const Latents& lat, double signal, Rng& rng) {
    const double w = std::clamp(signal, 0.0, 1.0);
    // grid: 0, 0.5, 1, 2
    const std::vector<double> neutral{0.55, 0.25, 0.15, 0.05};
    const std::vector<double> with_dementia{0.0, 0.30, 0.50, 0.20};
    const std::vector<double> without{0.85, 0.15, 0.0, 0.0};
    const std::vector<double>& cond = lat.dementia ? with_dementia : without;
    std::vector<double> mix(4);
    for (int i = 0; i < 4; ++i) mix[static_cast<size_t>(i)] = (1.0 - w) * neutral[static_cast<size_t>(i)] + w * cond[static_cast<size_t>(i)];
    static const double grid[4] = {0.0, 0.5, 1.0, 2.0};
    return grid[rng.categorical(mix)];
}

} // namespace

std::vector<SubjectRecord> synthesize_cohort(const SynthConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);

    // Nested availability tiers with exact counts.
    const int n_pet = static_cast<int>(std::llround(cfg.n * cfg.frac_pet));
    const int n_mri = std::max(static_cast<int>(std::llround(cfg.n * cfg.frac_mri)), n_pet);
    std::vector<int> order(static_cast<size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) order[static_cast<size_t>(i)] = i;
    rng.shuffle(order);
    std::vector<int> tier(static_cast<size_t>(cfg.n), 1);
    for (int i = 0; i < n_mri; ++i) tier[static_cast<size_t>(order[static_cast<size_t>(i)])] = i < n_pet ? 3 : 2;

    const double ts = cfg.tabular_signal;
    const std::vector<double> priors(cfg.class_priors.begin(), cfg.class_priors.end());

    std::vector<SubjectRecord> cohort;
    cohort.reserve(static_cast<size_t>(cfg.n));

    for (int i = 0; i < cfg.n; ++i) {
        Latents lat;
        lat.label = static_cast<SubType>(rng.categorical(priors));
        lat.in_vivo = lat.label != SubType::NormalControl;
        lat.phenotype = lat.label == SubType::TypicalAD    ? 1
                        : lat.label == SubType::AtypicalAD ? 2
                                                           : 0;
        lat.dementia = lat.phenotype != 0;

        SubjectRecord rec;
        char idbuf[24];
        std::snprintf(idbuf, sizeof(idbuf), "subj_%05d", i);
        rec.id = idbuf;
        rec.label = lat.label;

        // -- tabular draws (always consumed so the stream layout is stable) --
        Tabular& t = rec.tabular;
        const double age_shift = lat.label == SubType::TypicalAD      ? 4.0
                                 : lat.label == SubType::AtypicalAD   ? 2.0
                                 : lat.label == SubType::PreclinicalAD ? 1.0
                                                                       : 0.0;
        t.age = static_cast<int>(std::clamp(std::round(72.0 + ts * age_shift + rng.normal(0.0, 5.0)), 50.0, 95.0));
        t.education = static_cast<int>(std::clamp(
            std::round(14.0 - ts * (lat.dementia ? 1.0 : 0.0) + rng.normal(0.0, 3.0)), 6.0, 22.0));
        t.gender = rng.bernoulli(0.5) ? "female" : "male";
        t.heart_attack = rng.bernoulli(0.08);
        t.hypertension = rng.bernoulli(std::min(0.25 + 0.10 * ts * (lat.in_vivo ? 1.0 : 0.0), 0.9));
        t.stroke = rng.bernoulli(std::min(0.06 + 0.04 * ts * (lat.dementia ? 1.0 : 0.0), 0.9));
        t.alcohol_abuse = rng.bernoulli(0.05);
        t.psychiatric_disorder =
            rng.bernoulli(std::min(0.07 + 0.08 * ts * (lat.phenotype == 2 ? 1.0 : 0.0), 0.9));
        t.blood_test = rng.normal(0.0, 1.0) + 0.8 * ts * (lat.in_vivo ? 1.0 : 0.0);
        t.dementia_level = dementia_grade(lat, ts, rng);

        // missingness mask (draws happen for every field, applied after)
        const bool drop_age = rng.bernoulli(cfg.tabular_missing_rate);
        const bool drop_edu = rng.bernoulli(cfg.tabular_missing_rate);
        const bool drop_gender = rng.bernoulli(cfg.tabular_missing_rate);
        const bool drop_ha = rng.bernoulli(cfg.tabular_missing_rate);
        const bool drop_ht = rng.bernoulli(cfg.tabular_missing_rate);
        const bool drop_st = rng.bernoulli(cfg.tabular_missing_rate);
        const bool drop_al = rng.bernoulli(cfg.tabular_missing_rate);
        const bool drop_ps = rng.bernoulli(cfg.tabular_missing_rate);
        const bool drop_bl = rng.bernoulli(cfg.tabular_missing_rate);
        const bool drop_dl = rng.bernoulli(cfg.tabular_missing_rate);
        if (drop_age) t.age.reset();
        if (drop_edu) t.education.reset();
        if (drop_gender) t.gender.reset();
        if (drop_ha) t.heart_attack.reset();
        if (drop_ht) t.hypertension.reset();
        if (drop_st) t.stroke.reset();
        if (drop_al) t.alcohol_abuse.reset();
        if (drop_ps) t.psychiatric_disorder.reset();
        if (drop_bl) t.blood_test.reset();
        if (drop_dl) t.dementia_level.reset();
        if (!t.any_present()) t.age = 75; // keep the stage-1 invariant

        // -- volumes --
        const Blob mem{0.30, 0.35, 0.30, 0.0};
        const Blob post{0.72, 0.70, 0.68, 0.0};
        const Blob invivo{0.68, 0.28, 0.52, 0.0};

        if (tier[static_cast<size_t>(i)] >= 2) {
            std::vector<Blob> blobs;
            if (lat.phenotype == 1) blobs.push_back({mem.cz, mem.cy, mem.cx, 2.2 * cfg.mri_signal});
            if (lat.phenotype == 2) blobs.push_back({post.cz, post.cy, post.cx, 2.2 * cfg.mri_signal});
            if (lat.in_vivo) blobs.push_back({invivo.cz, invivo.cy, invivo.cx, 0.6 * cfg.mri_signal});
            rec.mri = make_volume(cfg.volume_shape, cfg.volume_noise, blobs, rng);
        }
        if (tier[static_cast<size_t>(i)] >= 3) {
            std::vector<Blob> blobs;
            if (lat.in_vivo) blobs.push_back({invivo.cz, invivo.cy, invivo.cx, 3.0 * cfg.pet_signal});
            if (lat.phenotype == 1) blobs.push_back({mem.cz, mem.cy, mem.cx, 0.4 * cfg.pet_signal});
            if (lat.phenotype == 2) blobs.push_back({post.cz, post.cy, post.cx, 0.4 * cfg.pet_signal});
            rec.pet = make_volume(cfg.volume_shape, cfg.volume_noise, blobs, rng);
        }

        cohort.push_back(std::move(rec));
    }
    return cohort;
}

} // namespace pmdx
