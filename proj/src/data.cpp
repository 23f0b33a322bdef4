#include "gencal/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

namespace gencal {

std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::blobs: return "blobs";
        case DatasetKind::rings: return "rings";
        case DatasetKind::glyphs: return "glyphs";
    }
    return "unknown";
}

DatasetKind parse_dataset_kind(const std::string& text) {
    if (text == "blobs") return DatasetKind::blobs;
    if (text == "rings") return DatasetKind::rings;
    if (text == "glyphs") return DatasetKind::glyphs;
    throw std::invalid_argument("unknown dataset kind '" + text + "' (expected blobs, rings or glyphs)");
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.samples = samples.select_rows(idx);
    out.labels.reserve(idx.size());
    for (std::size_t i : idx) out.labels.push_back(labels[i]);
    out.num_classes = num_classes;
    out.kind = kind;
    out.glyph_side = glyph_side;
    return out;
}

namespace {

void check_common(int k, std::size_t per_class) {
    if (k < 2) throw std::invalid_argument("dataset: need at least 2 classes, got " + std::to_string(k));
    if (per_class < 2) {
        throw std::invalid_argument("dataset: need at least 2 samples per class, got " +
                                    std::to_string(per_class));
    }
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace

Dataset make_blobs_at(const Matrix& centers, std::size_t per_class, std::uint64_t seed) {
    check_common(static_cast<int>(centers.rows), per_class);
    Rng rng = make_rng(seed, 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset d;
    d.kind = DatasetKind::blobs;
    d.num_classes = static_cast<int>(centers.rows);
    d.samples = Matrix(centers.rows * per_class, centers.cols);
    for (std::size_t k = 0; k < centers.rows; ++k) {
        for (std::size_t i = 0; i < per_class; ++i) {
            auto row = d.samples.row(k * per_class + i);
            for (std::size_t c = 0; c < centers.cols; ++c) row[c] = centers(k, c) + normal(rng);
            d.labels.push_back(static_cast<int>(k));
        }
    }
    return d;
}

Dataset make_blobs(int k, std::size_t per_class, std::size_t dim, double separation,
                   std::uint64_t seed) {
    check_common(k, per_class);
    if (!(separation > 0.0)) throw std::invalid_argument("make_blobs: separation must be positive");
    if (dim == 0) throw std::invalid_argument("make_blobs: dim must be positive");
    Rng rng = make_rng(seed, 0);
    std::uniform_real_distribution<double> box(-separation, separation);
    const std::size_t kk = static_cast<std::size_t>(k);
    Matrix centers(kk, dim);
    const double min_sq = separation * separation;
    constexpr int kMaxAttempts = 20000;
    std::size_t placed = 0;
    for (int attempt = 0; attempt < kMaxAttempts && placed < kk; ++attempt) {
        auto cand = centers.row(placed);
        for (double& v : cand) v = box(rng);
        bool ok = true;
        for (std::size_t j = 0; j < placed && ok; ++j) ok = sq_dist(cand, centers.row(j)) >= min_sq;
        if (ok) ++placed;
    }
    if (placed < kk) {
        throw std::invalid_argument("make_blobs: cannot place " + std::to_string(k) +
                                    " centers at separation " + std::to_string(separation) +
                                    " in dimension " + std::to_string(dim));
    }
    return make_blobs_at(centers, per_class, seed);
}

Dataset make_rings(int k, std::size_t per_class, double separation, double noise_sigma,
                   std::uint64_t seed) {
    check_common(k, per_class);
    if (!(separation > 0.0) || noise_sigma < 0.0) {
        throw std::invalid_argument("make_rings: separation must be positive and noise nonnegative");
    }
    Rng rng = make_rng(seed, 2);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> normal(0.0, noise_sigma);
    Dataset d;
    d.kind = DatasetKind::rings;
    d.num_classes = k;
    d.samples = Matrix(static_cast<std::size_t>(k) * per_class, 2);
    for (int c = 0; c < k; ++c) {
        const double radius = separation * (c + 1);
        for (std::size_t i = 0; i < per_class; ++i) {
            const double a = angle(rng);
            const double r = radius + (noise_sigma > 0.0 ? normal(rng) : 0.0);
            auto row = d.samples.row(static_cast<std::size_t>(c) * per_class + i);
            row[0] = r * std::cos(a);
            row[1] = r * std::sin(a);
            d.labels.push_back(c);
        }
    }
    return d;
}

std::vector<double> glyph_template(int index, std::size_t side) {
    if (side != 8 && side != 12 && side != 16) {
        throw std::invalid_argument("glyph side must be 8, 12 or 16, got " + std::to_string(side));
    }
    if (index < 0 || index >= kGlyphTemplateCount) {
        throw std::invalid_argument("glyph template index out of range: " + std::to_string(index));
    }
    const long s = static_cast<long>(side);
    const long q = s / 4;  // stripe / block width
    const long e = s / 8;  // thin stroke half-width
    const double mid = (s - 1) / 2.0;
    std::vector<double> t(side * side);
    for (long r = 0; r < s; ++r) {
        for (long c = 0; c < s; ++c) {
            bool on = false;
            switch (index) {
                case 0: on = (r / q) % 2 == 0; break;                    // horizontal bars
                case 1: on = (c / q) % 2 == 0; break;                    // vertical bars
                case 2: on = std::abs(r - mid) < q || std::abs(c - mid) < q; break;  // plus
                case 3: on = std::abs(r - c) <= e || std::abs(r + c - (s - 1)) <= e; break;  // X
                case 4: on = (r < q || r >= s - q) && (c < q || c >= s - q); break;  // corners
                case 5: on = ((r / q) + (c / q)) % 2 == 0; break;        // checker
                case 6: {                                                // ring
                    const double dist = std::hypot(r - mid, c - mid);
                    on = dist >= s / 4.0 && dist <= s / 2.0 - 0.5;
                    break;
                }
                case 7: on = std::abs(r - mid) < q && std::abs(c - mid) < q; break;  // center box
                case 8: on = r < e || r >= s - e || c < e || c >= s - e; break;      // frame
                case 9: on = ((r + c) / q) % 2 == 0; break;              // diagonal stripes
                default: break;
            }
            t[static_cast<std::size_t>(r * s + c)] = on ? 1.0 : -1.0;
        }
    }
    return t;
}

Dataset make_glyphs(int k, std::size_t per_class, std::size_t side, double noise_sigma,
                    std::uint64_t seed) {
    check_common(k, per_class);
    if (k > kGlyphTemplateCount) {
        throw std::invalid_argument("make_glyphs: k=" + std::to_string(k) + " exceeds the " +
                                    std::to_string(kGlyphTemplateCount) + " built-in templates");
    }
    if (noise_sigma < 0.0) throw std::invalid_argument("make_glyphs: noise_sigma must be nonnegative");
    Rng rng = make_rng(seed, 3);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t dim = side * side;
    Dataset d;
    d.kind = DatasetKind::glyphs;
    d.glyph_side = side;
    d.num_classes = k;
    d.samples = Matrix(static_cast<std::size_t>(k) * per_class, dim);
    for (int c = 0; c < k; ++c) {
        const auto tmpl = glyph_template(c, side);
        for (std::size_t i = 0; i < per_class; ++i) {
            auto row = d.samples.row(static_cast<std::size_t>(c) * per_class + i);
            for (std::size_t p = 0; p < dim; ++p) {
                const double v = noise_sigma > 0.0 ? tmpl[p] + noise_sigma * normal(rng) : tmpl[p];
                row[p] = std::clamp(v, -1.0, 1.0);
            }
            d.labels.push_back(c);
        }
    }
    return d;
}

void AugmentSpec::validate() const {
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("augment: noise_sigma must be >= 0");
    if (!(mask_prob >= 0.0 && mask_prob < 1.0)) {
        throw std::invalid_argument("augment: mask_prob must lie in [0, 1)");
    }
    if (!(jitter_min > 0.0 && jitter_min <= 1.0 && jitter_max >= 1.0)) {
        throw std::invalid_argument("augment: jitter range must be positive and contain 1");
    }
}

std::vector<double> augment(std::span<const double> x, const AugmentSpec& spec, Rng& rng) {
    std::vector<double> out(x.begin(), x.end());
    if (spec.jitter_min != spec.jitter_max) {
        const double s = std::uniform_real_distribution<double>(spec.jitter_min, spec.jitter_max)(rng);
        for (double& v : out) v *= s;
    } else if (spec.jitter_min != 1.0) {
        for (double& v : out) v *= spec.jitter_min;
    }
    if (spec.noise_sigma > 0.0) {
        std::normal_distribution<double> normal(0.0, spec.noise_sigma);
        for (double& v : out) v += normal(rng);
    }
    if (spec.mask_prob > 0.0) {
        std::bernoulli_distribution drop(spec.mask_prob);
        for (double& v : out) {
            if (drop(rng)) v = 0.0;
        }
    }
    if (spec.rotate_side > 0) {
        const std::size_t s = spec.rotate_side;
        if (s * s != out.size()) throw std::invalid_argument("augment: rotate_side does not match sample size");
        const int turns = std::uniform_int_distribution<int>(0, 3)(rng);
        for (int t = 0; t < turns; ++t) {
            std::vector<double> rot(out.size());
            for (std::size_t r = 0; r < s; ++r)
                for (std::size_t c = 0; c < s; ++c) rot[c * s + (s - 1 - r)] = out[r * s + c];
            out.swap(rot);
        }
    }
    if (spec.clamp_unit) {
        for (double& v : out) v = std::clamp(v, -1.0, 1.0);
    }
    return out;
}

Matrix augment_rows(const Matrix& x, const AugmentSpec& spec, Rng& rng) {
    Matrix out(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r) {
        auto a = augment(x.row(r), spec, rng);
        std::copy(a.begin(), a.end(), out.row(r).begin());
    }
    return out;
}

void ImbalanceSpec::validate(int num_classes) const {
    if (keep_fraction.size() != static_cast<std::size_t>(num_classes)) {
        throw std::invalid_argument("imbalance: expected " + std::to_string(num_classes) +
                                    " fractions, got " + std::to_string(keep_fraction.size()));
    }
    bool any_full = false;
    for (double f : keep_fraction) {
        if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("imbalance: fractions must lie in (0, 1]");
        any_full = any_full || f == 1.0;
    }
    if (!any_full) throw std::invalid_argument("imbalance: at least one class must keep fraction 1");
}

Dataset apply_imbalance(const Dataset& d, const ImbalanceSpec& spec, std::uint64_t seed) {
    spec.validate(d.num_classes);
    Rng rng = make_rng(seed, 4);
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(d.num_classes));
    for (std::size_t i = 0; i < d.size(); ++i) by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);
    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < by_class.size(); ++k) {
        auto& idx = by_class[k];
        // The small epsilon keeps products like 0.2 * 100 from rounding up.
        const auto n = static_cast<std::size_t>(
            std::ceil(spec.keep_fraction[k] * static_cast<double>(idx.size()) - 1e-9));
        if (n < 2) {
            throw std::invalid_argument("imbalance: class " + std::to_string(k) + " would retain " +
                                        std::to_string(n) + " samples (minimum 2)");
        }
        if (n < idx.size()) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(n);
        }
        keep.insert(keep.end(), idx.begin(), idx.end());
    }
    std::sort(keep.begin(), keep.end());
    return d.subset(keep);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    const Dataset& d, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("split: test fraction must lie in (0, 1)");
    }
    Rng rng = make_rng(seed, 5);
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(d.num_classes));
    for (std::size_t i = 0; i < d.size(); ++i) by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);
    std::vector<std::size_t> train, test;
    for (auto& idx : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(idx.size())));
        if (idx.size() >= 2) n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
        test.insert(test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, end);
}

}  // namespace

void write_csv(std::ostream& os, const Matrix& samples, std::span<const int> labels) {
    if (labels.size() != samples.rows) throw std::invalid_argument("write_csv: label count mismatch");
    std::string line = "label";
    for (std::size_t c = 0; c < samples.cols; ++c) line += ",f" + std::to_string(c);
    os << line << '\n';
    for (std::size_t r = 0; r < samples.rows; ++r) {
        line = std::to_string(labels[r]);
        for (double v : samples.row(r)) {
            line += ',';
            append_double(line, v);
        }
        os << line << '\n';
    }
}

void write_csv(const std::filesystem::path& path, const Matrix& samples, std::span<const int> labels) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    write_csv(os, samples, labels);
    if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

Dataset read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("label", 0) != 0) {
        throw std::runtime_error("read_csv: missing 'label,...' header");
    }
    const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    Dataset d;
    std::vector<double> values;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        std::size_t n = 0;
        while (std::getline(ls, field, ',')) {
            const char* b = field.data();
            const char* e = b + field.size();
            if (n == 0) {
                int label = 0;
                auto res = std::from_chars(b, e, label);
                if (res.ec != std::errc() || res.ptr != e || label < 0) {
                    throw std::runtime_error("read_csv: bad label on line " + std::to_string(lineno));
                }
                d.labels.push_back(label);
            } else {
                double v = 0.0;
                auto res = std::from_chars(b, e, v);
                if (res.ec != std::errc() || res.ptr != e) {
                    throw std::runtime_error("read_csv: bad value on line " + std::to_string(lineno));
                }
                values.push_back(v);
            }
            ++n;
        }
        if (n != cols + 1) {
            throw std::runtime_error("read_csv: line " + std::to_string(lineno) + " has " +
                                     std::to_string(n) + " fields, expected " + std::to_string(cols + 1));
        }
    }
    d.samples = Matrix(d.labels.size(), cols, std::move(values));
    d.num_classes = d.labels.empty() ? 0 : *std::max_element(d.labels.begin(), d.labels.end()) + 1;
    return d;
}

Dataset read_csv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
    return read_csv(is);
}

}  // namespace gencal
