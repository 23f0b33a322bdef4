#include "gencal/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

namespace gencal {

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::full: return "full";
        case Ablation::no_d: return "no_d";
        case Ablation::no_cwm: return "no_cwm";
        case Ablation::no_ml: return "no_ml";
    }
    return "full";
}

Ablation parse_ablation(const std::string& text) {
    if (text == "full") return Ablation::full;
    if (text == "no_d") return Ablation::no_d;
    if (text == "no_cwm") return Ablation::no_cwm;
    if (text == "no_ml") return Ablation::no_ml;
    throw std::invalid_argument("unknown ablation '" + text + "' (expected full, no_d, no_cwm or no_ml)");
}

std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* b = value.data();
    const char* e = b + value.size();
    auto res = std::from_chars(b, e, out);
    if (res.ec != std::errc() || res.ptr != e) {
        throw ConfigError("config: key '" + key + "' has invalid value '" + value + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    throw ConfigError("config: key '" + key + "' expects true/false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
    std::vector<T> out;
    for (const auto& item : split_list(value)) out.push_back(parse_number<T>(key, item));
    if (out.empty()) throw ConfigError("config: key '" + key + "' needs a nonempty list");
    return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_floating_point_v<T>) out += format_double(v[i]);
        else out += std::to_string(v[i]);
    }
    return out;
}

template <class E, class F>
E parse_enum(const std::string& key, const std::string& value, F parse) {
    try {
        return parse(value);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("config: key '" + key + "': " + e.what());
    }
}

struct KeyDef {
    const char* name;
    std::function<void(TrainConfig&, const std::string& key, const std::string& value)> set;
    std::function<std::string(const TrainConfig&)> get;
};

#define GENCAL_NUM(KEY, FIELD, TYPE)                                                             \
    KeyDef {                                                                                     \
        KEY, [](TrainConfig& c, const std::string& k, const std::string& v) {                   \
            c.FIELD = parse_number<TYPE>(k, v);                                                 \
        },                                                                                       \
            [](const TrainConfig& c) {                                                           \
                if constexpr (std::is_floating_point_v<TYPE>) return format_double(c.FIELD);    \
                else return std::to_string(c.FIELD);                                             \
            }                                                                                    \
    }

#define GENCAL_BOOL(KEY, FIELD)                                                                  \
    KeyDef {                                                                                     \
        KEY, [](TrainConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_bool(k, v); }, \
            [](const TrainConfig& c) { return std::string(c.FIELD ? "true" : "false"); }        \
    }

#define GENCAL_LIST(KEY, FIELD, TYPE)                                                            \
    KeyDef {                                                                                     \
        KEY, [](TrainConfig& c, const std::string& k, const std::string& v) {                   \
            c.FIELD = parse_list<TYPE>(k, v);                                                    \
        },                                                                                       \
            [](const TrainConfig& c) { return join(c.FIELD); }                                   \
    }

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> table = {
        {"dataset.kind",
         [](TrainConfig& c, const std::string& k, const std::string& v) {
             c.dataset.kind = parse_enum<DatasetKind>(k, v, parse_dataset_kind);
         },
         [](const TrainConfig& c) { return to_string(c.dataset.kind); }},
        GENCAL_NUM("dataset.k", dataset.k, int),
        GENCAL_NUM("dataset.per_class", dataset.per_class, std::size_t),
        GENCAL_NUM("dataset.dim", dataset.dim, std::size_t),
        GENCAL_NUM("dataset.separation", dataset.separation, double),
        GENCAL_NUM("dataset.side", dataset.side, std::size_t),
        GENCAL_NUM("dataset.noise", dataset.noise, double),

        GENCAL_LIST("net.feature_hidden", feature_hidden, std::size_t),
        GENCAL_NUM("net.feature_dim", feature_dim, std::size_t),
        GENCAL_BOOL("net.normalize", normalize_features),
        GENCAL_NUM("net.head_hidden", head_hidden, std::size_t),
        GENCAL_LIST("net.denoiser_hidden", denoiser_hidden, std::size_t),
        GENCAL_NUM("net.time_dim", time_dim, std::size_t),
        GENCAL_NUM("net.label_dim", label_dim, std::size_t),

        GENCAL_NUM("diffusion.t", diffusion_steps, int),
        GENCAL_NUM("diffusion.beta_start", beta_start, double),
        GENCAL_NUM("diffusion.beta_end", beta_end, double),
        {"diffusion.mode",
         [](TrainConfig& c, const std::string& k, const std::string& v) {
             c.reverse_mode = parse_enum<ReverseMode>(k, v, parse_reverse_mode);
         },
         [](const TrainConfig& c) { return to_string(c.reverse_mode); }},

        GENCAL_NUM("loss.tau", contrastive.tau, double),
        {"loss.kernel.bandwidths",
         [](TrainConfig& c, const std::string& k, const std::string& v) {
             if (v == "median") c.kernel.bandwidths.clear();
             else c.kernel.bandwidths = parse_list<double>(k, v);
         },
         [](const TrainConfig& c) {
             return c.kernel.median() ? std::string("median") : join(c.kernel.bandwidths);
         }},
        GENCAL_NUM("loss.weights.d", weight_d, double),
        GENCAL_NUM("loss.weights.cwm", weight_cwm, double),
        GENCAL_NUM("loss.weights.ml", weight_ml, double),

        GENCAL_NUM("augment.noise_sigma", augment.noise_sigma, double),
        GENCAL_NUM("augment.mask_prob", augment.mask_prob, double),
        GENCAL_NUM("augment.jitter_min", augment.jitter_min, double),
        GENCAL_NUM("augment.jitter_max", augment.jitter_max, double),
        GENCAL_BOOL("augment.rotate", augment_rotate),

        GENCAL_NUM("optim.lr_pretrain", lr_pretrain, double),
        GENCAL_NUM("optim.lr_head", lr_head, double),
        GENCAL_NUM("optim.lr_ddpm_pre", lr_ddpm_pre, double),
        GENCAL_NUM("optim.lr_cluster", lr_cluster, double),
        GENCAL_NUM("optim.lr_denoiser", lr_denoiser, double),
        GENCAL_NUM("optim.beta1", adam_beta1, double),
        GENCAL_NUM("optim.beta2", adam_beta2, double),
        GENCAL_NUM("optim.eps", adam_eps, double),

        GENCAL_NUM("train.epochs.pretrain_clr", epochs_pretrain, int),
        GENCAL_NUM("train.epochs.head", epochs_head, int),
        GENCAL_NUM("train.epochs.ddpm_pre", epochs_ddpm, int),
        GENCAL_NUM("train.epochs.stage2", epochs_stage2, int),
        GENCAL_NUM("train.epochs.ddpm_refresh", epochs_refresh, int),
        GENCAL_NUM("train.rounds", rounds, int),
        GENCAL_NUM("train.batch_size", batch_size, std::size_t),
        GENCAL_NUM("train.seed", seed, std::uint64_t),
        GENCAL_NUM("train.test_fraction", test_fraction, double),
        GENCAL_BOOL("train.normalize_data", normalize_data),
        {"train.gen_labels",
         [](TrainConfig& c, const std::string& k, const std::string& v) {
             if (v == "copy") c.gen_labels = GenLabelMode::copy;
             else if (v == "uniform") c.gen_labels = GenLabelMode::uniform;
             else throw ConfigError("config: key '" + k + "' expects copy or uniform, got '" + v + "'");
         },
         [](const TrainConfig& c) {
             return std::string(c.gen_labels == GenLabelMode::copy ? "copy" : "uniform");
         }},
        GENCAL_NUM("train.samples_per_class", samples_per_class, std::size_t),

        {"ablation",
         [](TrainConfig& c, const std::string& k, const std::string& v) {
             c.ablation = parse_enum<Ablation>(k, v, parse_ablation);
         },
         [](const TrainConfig& c) { return to_string(c.ablation); }},
        {"imbalance.fractions",
         [](TrainConfig& c, const std::string& k, const std::string& v) {
             if (v == "none") c.imbalance.reset();
             else c.imbalance = ImbalanceSpec{parse_list<double>(k, v)};
         },
         [](const TrainConfig& c) {
             return c.imbalance ? join(c.imbalance->keep_fraction) : std::string("none");
         }},
    };
    return table;
}

#undef GENCAL_NUM
#undef GENCAL_BOOL
#undef GENCAL_LIST

}  // namespace

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (dataset.k < 2) fail("dataset.k must be >= 2");
    if (dataset.per_class < 2) fail("dataset.per_class must be >= 2");
    if (dataset.kind == DatasetKind::glyphs && dataset.k > kGlyphTemplateCount) {
        fail("dataset.k=" + std::to_string(dataset.k) + " exceeds the " + std::to_string(kGlyphTemplateCount) +
             " glyph templates");
    }
    if (feature_dim == 0 || head_hidden == 0 || time_dim < 2 || time_dim % 2 != 0 || label_dim == 0) {
        fail("network widths must be positive and net.time_dim even");
    }
    if (diffusion_steps < 1) fail("diffusion.t must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        fail("need 0 < diffusion.beta_start <= diffusion.beta_end < 1");
    }
    if (!(contrastive.tau > 0.0)) fail("loss.tau must be positive");
    for (double b : kernel.bandwidths)
        if (!(b > 0.0)) fail("loss.kernel.bandwidths must be positive");
    if (weight_d < 0.0 || weight_cwm < 0.0 || weight_ml < 0.0) fail("loss weights must be >= 0");
    try {
        augment.validate();
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
    for (double lr : {lr_pretrain, lr_head, lr_ddpm_pre, lr_cluster, lr_denoiser})
        if (!(lr > 0.0)) fail("learning rates must be positive");
    if (epochs_pretrain < 1 || epochs_head < 1 || epochs_ddpm < 1 || epochs_stage2 < 1 || epochs_refresh < 1) {
        fail("all epoch counts must be >= 1");
    }
    if (rounds < 0) fail("train.rounds must be >= 0");
    if (batch_size < 2) fail("train.batch_size must be >= 2");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("train.test_fraction must lie in (0, 1)");
    if (imbalance) {
        try {
            imbalance->validate(dataset.k);
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
    }
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& def : key_table()) {
        if (key == def.name) {
            def.set(cfg, key, value);
            return;
        }
    }
    throw ConfigError("config: unknown key '" + key + "'");
}

TrainConfig parse_config(std::istream& is) {
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value");
        }
        set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

TrainConfig parse_config_text(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open '" + path.string() + "'");
    return parse_config(is);
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& def : key_table()) out.emplace_back(def.name, def.get(cfg));
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& def : key_table()) out.emplace_back(def.name);
    return out;
}

}  // namespace gencal
