#include "gencal/nets.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace gencal {

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    std::vector<double> w(in * out);
    for (double& v : w) v = normal(rng);
    weight = Tensor::from_data({in, out}, std::move(w), true);
    bias = Tensor::zeros({out}, true);
}

Tensor Linear::operator()(const Tensor& x) const {
    if (x.dim() != 2 || x.cols() != in_features()) {
        throw ShapeError("linear: input width " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
    }
    return add(matmul(x, weight), bias);
}

namespace {

void append_linear(NamedTensors& out, const std::string& name, const Linear& l) {
    out.emplace_back(name + ".weight", l.weight);
    out.emplace_back(name + ".bias", l.bias);
}

}  // namespace

// ---------------------------------------------------------------------------

FeatureExtractor::FeatureExtractor(const FeatureExtractorConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.input_dim == 0 || cfg.feature_dim == 0) {
        throw std::invalid_argument("feature extractor: input and feature dims must be positive");
    }
    std::size_t width = cfg.input_dim;
    for (std::size_t h : cfg.hidden) {
        layers_.emplace_back(width, h, rng);
        width = h;
    }
    layers_.emplace_back(width, cfg.feature_dim, rng);
}

Tensor FeatureExtractor::operator()(const Tensor& batch) const {
    if (batch.dim() != 2 || batch.cols() != cfg_.input_dim) {
        throw ShapeError("features: expected width " + std::to_string(cfg_.input_dim) + ", got " +
                         shape_str(batch.shape()));
    }
    Tensor h = batch;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i](h);
        if (i + 1 < layers_.size()) h = relu(h);
    }
    return cfg_.normalize ? l2_normalize_rows(h) : h;
}

NamedTensors FeatureExtractor::named_parameters(const std::string& prefix) const {
    NamedTensors out;
    for (std::size_t i = 0; i < layers_.size(); ++i) append_linear(out, prefix + std::to_string(i), layers_[i]);
    return out;
}

FeatureExtractor FeatureExtractor::clone() const {
    FeatureExtractor f;
    f.cfg_ = cfg_;
    for (const auto& l : layers_) f.layers_.push_back(l.clone());
    return f;
}

// ---------------------------------------------------------------------------

ClusteringHead::ClusteringHead(const ClusteringHeadConfig& cfg, Rng& rng)
    : cfg_(cfg), hidden_(cfg.feature_dim, cfg.hidden, rng), output_(cfg.hidden, cfg.num_classes, rng) {}

Tensor ClusteringHead::scores(const Tensor& feats) const { return output_(relu(hidden_(feats))); }

NamedTensors ClusteringHead::named_parameters(const std::string& prefix) const {
    NamedTensors out;
    append_linear(out, prefix + "0", hidden_);
    append_linear(out, prefix + "1", output_);
    return out;
}

ClusteringHead ClusteringHead::clone() const {
    ClusteringHead c;
    c.cfg_ = cfg_;
    c.hidden_ = hidden_.clone();
    c.output_ = output_.clone();
    return c;
}

// ---------------------------------------------------------------------------

Tensor time_embedding(std::span<const int> t, std::size_t dim) {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time embedding dim must be even and >= 2");
    const std::size_t half = dim / 2;
    std::vector<double> v(t.size() * dim);
    for (std::size_t i = 0; i < t.size(); ++i) {
        for (std::size_t j = 0; j < half; ++j) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
            const double arg = static_cast<double>(t[i]) * freq;
            v[i * dim + j] = std::sin(arg);
            v[i * dim + half + j] = std::cos(arg);
        }
    }
    return Tensor::from_data({t.size(), dim}, std::move(v));
}

Denoiser::Denoiser(const DenoiserConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.data_dim == 0 || cfg.hidden.empty()) {
        throw std::invalid_argument("denoiser: data dim and hidden widths must be nonempty");
    }
    std::normal_distribution<double> small(0.0, 0.02);
    std::vector<double> table(cfg.num_classes * cfg.label_dim);
    for (double& v : table) v = small(rng);
    label_table_ = Tensor::from_data({cfg.num_classes, cfg.label_dim}, std::move(table), true);
    std::size_t width = cfg.data_dim + cfg.time_dim + cfg.label_dim;
    for (std::size_t h : cfg.hidden) {
        layers_.emplace_back(width, h, rng);
        width = h;
    }
    output_ = Linear(width, cfg.data_dim, rng);
}

Tensor Denoiser::predict_noise(const Tensor& x_t, std::span<const int> t,
                               std::span<const int> labels) const {
    if (x_t.dim() != 2 || x_t.cols() != cfg_.data_dim) {
        throw ShapeError("predict_noise: expected width " + std::to_string(cfg_.data_dim) + ", got " +
                         shape_str(x_t.shape()));
    }
    if (t.size() != x_t.rows() || labels.size() != x_t.rows()) {
        throw ShapeError("predict_noise: batch of " + std::to_string(x_t.rows()) + " rows needs as many steps and labels");
    }
    for (int step : t) {
        if (step < 1 || static_cast<std::size_t>(step) > cfg_.max_t) {
            throw std::out_of_range("predict_noise: step " + std::to_string(step) + " outside [1," +
                                    std::to_string(cfg_.max_t) + "]");
        }
    }
    const Tensor label_emb = matmul(one_hot(labels, cfg_.num_classes), label_table_);
    const Tensor parts[] = {x_t, time_embedding(t, cfg_.time_dim), label_emb};
    Tensor h = relu(layers_[0](concat_cols(parts)));
    // Residual skip around every pair of hidden layers with matching widths.
    Tensor skip = h;
    for (std::size_t i = 1; i < layers_.size(); ++i) {
        h = relu(layers_[i](h));
        if (i % 2 == 0 && skip.shape() == h.shape()) {
            h = add(h, skip);
            skip = h;
        }
    }
    return output_(h);
}

NamedTensors Denoiser::named_parameters(const std::string& prefix) const {
    NamedTensors out;
    out.emplace_back(prefix + "label_table", label_table_);
    for (std::size_t i = 0; i < layers_.size(); ++i) append_linear(out, prefix + std::to_string(i), layers_[i]);
    append_linear(out, prefix + "out", output_);
    return out;
}

Denoiser Denoiser::clone() const {
    Denoiser d;
    d.cfg_ = cfg_;
    d.label_table_ = label_table_.clone();
    for (const auto& l : layers_) d.layers_.push_back(l.clone());
    d.output_ = output_.clone();
    return d;
}

// ---------------------------------------------------------------------------

DataNorm DataNorm::fit(const Matrix& samples) {
    DataNorm n;
    if (samples.values.empty()) return n;
    double s = 0.0;
    for (double v : samples.values) s += v;
    n.shift = s / static_cast<double>(samples.values.size());
    double ss = 0.0;
    for (double v : samples.values) ss += (v - n.shift) * (v - n.shift);
    const double sd = std::sqrt(ss / static_cast<double>(samples.values.size()));
    n.scale = sd > 1e-12 ? sd : 1.0;
    return n;
}

Matrix DataNorm::apply(const Matrix& raw) const {
    Matrix out = raw;
    for (double& v : out.values) v = (v - shift) / scale;
    return out;
}

Matrix DataNorm::invert(const Matrix& normalized) const {
    Matrix out = normalized;
    for (double& v : out.values) v = v * scale + shift;
    return out;
}

NamedTensors ModelSet::named_parameters() const {
    NamedTensors out = feature.named_parameters("F.");
    for (auto& p : head.named_parameters("C.")) out.push_back(std::move(p));
    for (auto& p : denoiser.named_parameters("G.")) out.push_back(std::move(p));
    return out;
}

std::vector<Tensor> ModelSet::feature_parameters() const { return values_of(feature.named_parameters("F.")); }
std::vector<Tensor> ModelSet::head_parameters() const { return values_of(head.named_parameters("C.")); }
std::vector<Tensor> ModelSet::denoiser_parameters() const { return values_of(denoiser.named_parameters("G.")); }

ModelSet ModelSet::clone() const {
    return ModelSet{feature.clone(), head.clone(), denoiser.clone(), norm};
}

std::size_t parameter_count(const NamedTensors& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

std::vector<Tensor> values_of(const NamedTensors& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) out.push_back(t);
    return out;
}

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void fnv_bytes(std::uint64_t& h, const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= kFnvPrime;
    }
}

void put_le(std::string& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::istream& is, int bytes) {
    unsigned char buf[8];
    if (!is.read(reinterpret_cast<char*>(buf), bytes)) throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

constexpr char kMagic[8] = {'G', 'E', 'N', 'C', 'A', 'L', 'C', 'K'};

}  // namespace

std::uint64_t hash_values(std::span<const Tensor> tensors) {
    std::uint64_t h = kFnvOffset;
    for (const auto& t : tensors) {
        for (double v : t.data()) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            fnv_bytes(h, &bits, sizeof bits);
        }
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

std::string checkpoint_bytes(const NamedTensors& tensors) {
    std::string out(kMagic, sizeof kMagic);
    put_le(out, kCheckpointVersion, 4);
    put_le(out, tensors.size(), 4);
    for (const auto& [name, t] : tensors) {
        put_le(out, name.size(), 4);
        out += name;
        put_le(out, t.shape().size(), 4);
        for (std::size_t d : t.shape()) put_le(out, d, 8);
        for (double v : t.data()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    }
    return out;
}

void write_checkpoint(std::ostream& os, const NamedTensors& tensors) {
    const std::string bytes = checkpoint_bytes(tensors);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    write_checkpoint(os, tensors);
    if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

NamedTensors read_checkpoint(std::istream& is) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("checkpoint: bad magic");
    }
    const auto version = get_le(is, 4);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto count = get_le(is, 4);
    NamedTensors out;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = get_le(is, 4);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), static_cast<std::streamsize>(name_len))) {
            throw std::runtime_error("checkpoint: truncated name");
        }
        const auto ndim = get_le(is, 4);
        if (ndim > 2) throw std::runtime_error("checkpoint: tensor '" + name + "' has too many dims");
        Shape shape;
        for (std::uint64_t d = 0; d < ndim; ++d) shape.push_back(get_le(is, 8));
        if (shape_numel(shape) > (std::size_t{1} << 28)) {
            throw std::runtime_error("checkpoint: tensor '" + name + "' is implausibly large");
        }
        std::vector<double> values(shape_numel(shape));
        for (double& v : values) v = std::bit_cast<double>(get_le(is, 8));
        out.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(values)));
    }
    return out;
}

NamedTensors read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
    return read_checkpoint(is);
}

NamedTensors checkpoint_entries(const ModelSet& models) {
    NamedTensors out = models.named_parameters();
    out.emplace_back("norm", Tensor::from_data({2}, {models.norm.shift, models.norm.scale}));
    return out;
}

void load_checkpoint_entries(ModelSet& models, const NamedTensors& entries) {
    NamedTensors targets = models.named_parameters();
    if (entries.size() != targets.size() + 1) {
        throw std::runtime_error("checkpoint: expected " + std::to_string(targets.size() + 1) +
                                 " tensors, got " + std::to_string(entries.size()));
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto& [name, src] = entries[i];
        auto& [tname, dst] = targets[i];
        if (name != tname || src.shape() != dst.shape()) {
            throw std::runtime_error("checkpoint: entry '" + name + "' " + shape_str(src.shape()) +
                                     " does not match '" + tname + "' " + shape_str(dst.shape()));
        }
        std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
    }
    const auto& [nname, norm] = entries.back();
    if (nname != "norm" || norm.numel() != 2) throw std::runtime_error("checkpoint: missing norm entry");
    models.norm = DataNorm{norm.at(0), norm.at(1)};
}

}  // namespace gencal
