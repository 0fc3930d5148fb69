#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "era/errors.hpp"
#include "era/tensor.hpp"

namespace era {

// ============================================================================
// Dataset
// ============================================================================

struct Dataset {
    std::size_t input_dim = 0;
    std::size_t classes = 0;
    std::vector<double> features;      // row-major, size() == size * input_dim
    std::vector<std::size_t> labels;

    std::size_t size() const { return labels.size(); }

    const double* row(std::size_t i) const { return features.data() + i * input_dim; }

    void validate() const {
        if (labels.empty()) {
            throw InputError("Dataset: empty dataset");
        }
        if (features.size() != labels.size() * input_dim) {
            throw InputError("Dataset: feature buffer does not match size * input_dim");
        }
        for (std::size_t label : labels) {
            if (label >= classes) {
                throw InputError("Dataset: label " + std::to_string(label) + " out of range");
            }
        }
    }
};

/// Gaussian cluster task specification. When `cluster_means` is empty the
/// means are drawn from N(0, mean_scale) at generation time.
struct SyntheticSpec {
    std::size_t classes = 5;
    std::size_t input_dim = 16;
    std::size_t samples_per_class = 400;
    std::vector<double> cluster_means;  // classes x input_dim, row-major
    double mean_scale = 1.0;
    double cluster_scale = 1.0;  // per-coordinate noise standard deviation
    double label_noise = 0.0;    // fraction of labels re-drawn uniformly

    void validate() const {
        if (classes < 2) {
            throw SpecError("SyntheticSpec: need at least two classes");
        }
        if (input_dim == 0 || samples_per_class == 0) {
            throw SpecError("SyntheticSpec: zero input_dim or samples_per_class");
        }
        if (!cluster_means.empty() && cluster_means.size() != classes * input_dim) {
            throw SpecError("SyntheticSpec: cluster_means must hold classes * input_dim values");
        }
        if (!(cluster_scale > 0.0) || !(mean_scale > 0.0)) {
            throw SpecError("SyntheticSpec: scales must be positive");
        }
        if (label_noise < 0.0 || label_noise > 1.0) {
            throw SpecError("SyntheticSpec: label_noise must lie in [0, 1]");
        }
        if (!cluster_means.empty()) {
            for (std::size_t a = 0; a < classes; ++a) {
                for (std::size_t b = a + 1; b < classes; ++b) {
                    bool same = true;
                    for (std::size_t j = 0; j < input_dim && same; ++j) {
                        same = cluster_means[a * input_dim + j] == cluster_means[b * input_dim + j];
                    }
                    if (same) {
                        throw SpecError("SyntheticSpec: cluster means " + std::to_string(a) +
                                        " and " + std::to_string(b) + " coincide");
                    }
                }
            }
        }
    }
};

struct SyntheticData {
    Dataset train;
    Dataset test;
    std::vector<double> means;  // the means actually used, classes x input_dim
};

/// Draws the task, shuffles it, and splits 80/20. The same seed always
/// yields byte-identical datasets.
inline SyntheticData generate(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<double> means = spec.cluster_means;
    if (means.empty()) {
        means.resize(spec.classes * spec.input_dim);
        for (double& m : means) {
            m = normal(rng) * spec.mean_scale;
        }
    }

    std::size_t total = spec.classes * spec.samples_per_class;
    std::vector<double> features(total * spec.input_dim);
    std::vector<std::size_t> labels(total);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> any_class(0, spec.classes - 1);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
            std::size_t i = c * spec.samples_per_class + s;
            for (std::size_t j = 0; j < spec.input_dim; ++j) {
                features[i * spec.input_dim + j] =
                    means[c * spec.input_dim + j] + normal(rng) * spec.cluster_scale;
            }
            labels[i] = c;
            if (spec.label_noise > 0.0 && unit(rng) < spec.label_noise) {
                labels[i] = any_class(rng);
            }
        }
    }

    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) {
        order[i] = i;
    }
    std::shuffle(order.begin(), order.end(), rng);

    std::size_t train_count = total * 4 / 5;
    SyntheticData out;
    out.means = means;
    auto fill = [&](Dataset& ds, std::size_t begin, std::size_t end) {
        ds.input_dim = spec.input_dim;
        ds.classes = spec.classes;
        ds.features.reserve((end - begin) * spec.input_dim);
        ds.labels.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            std::size_t src = order[i];
            ds.features.insert(ds.features.end(), features.begin() + src * spec.input_dim,
                               features.begin() + (src + 1) * spec.input_dim);
            ds.labels.push_back(labels[src]);
        }
    };
    fill(out.train, 0, train_count);
    fill(out.test, train_count, total);
    out.train.validate();
    out.test.validate();
    return out;
}

// ============================================================================
// CSV interchange
// ============================================================================

/// Reads `f1,...,fd,label` rows. Lines starting with '#' are skipped. The
/// feature width is fixed by the first data row.
inline Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("load_csv: cannot open '" + path + "'");
    }
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            fields.push_back(field);
        }
        if (fields.size() < 2) {
            throw InputError("load_csv: line " + std::to_string(line_no) +
                             ": need at least one feature and a label");
        }
        std::size_t width = fields.size() - 1;
        if (ds.input_dim == 0) {
            ds.input_dim = width;
        } else if (width != ds.input_dim) {
            throw InputError("load_csv: line " + std::to_string(line_no) + ": " +
                             std::to_string(width) + " features, expected " +
                             std::to_string(ds.input_dim));
        }
        for (std::size_t j = 0; j < width; ++j) {
            double v = 0.0;
            std::size_t pos = 0;
            try {
                v = std::stod(fields[j], &pos);
            } catch (const std::exception&) {
                throw InputError("load_csv: line " + std::to_string(line_no) + ": bad feature '" +
                                 fields[j] + "'");
            }
            if (pos != fields[j].size() || !std::isfinite(v)) {
                throw InputError("load_csv: line " + std::to_string(line_no) + ": bad feature '" +
                                 fields[j] + "'");
            }
            ds.features.push_back(v);
        }
        const std::string& label_text = fields.back();
        std::size_t pos = 0;
        long label = 0;
        try {
            label = std::stol(label_text, &pos);
        } catch (const std::exception&) {
            throw InputError("load_csv: line " + std::to_string(line_no) + ": bad label '" +
                             label_text + "'");
        }
        if (pos != label_text.size() || label < 0) {
            throw InputError("load_csv: line " + std::to_string(line_no) + ": bad label '" +
                             label_text + "'");
        }
        ds.labels.push_back(static_cast<std::size_t>(label));
    }
    if (ds.labels.empty()) {
        throw InputError("load_csv: '" + path + "' holds no data rows");
    }
    std::size_t max_label = 0;
    for (std::size_t label : ds.labels) {
        max_label = std::max(max_label, label);
    }
    ds.classes = max_label + 1;
    ds.validate();
    return ds;
}

inline void save_csv(const Dataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream out(path);
    if (!out) {
        throw IoError("save_csv: cannot open '" + path + "' for writing");
    }
    out << "#";
    for (std::size_t j = 0; j < ds.input_dim; ++j) {
        out << " f" << (j + 1);
    }
    out << " label\n";
    out.precision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.input_dim; ++j) {
            out << ds.row(i)[j] << ",";
        }
        out << ds.labels[i] << "\n";
    }
    if (!out) {
        throw IoError("save_csv: write to '" + path + "' failed");
    }
}

// ============================================================================
// Batching
// ============================================================================

struct Batch {
    Tensor x;                        // [n x input_dim]
    std::vector<std::size_t> labels;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t epoch) {
    // splitmix64 of the pair, so nearby (seed, epoch) values decorrelate.
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (epoch + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline Batch take_batch(const Dataset& ds, const std::vector<std::size_t>& order, std::size_t begin,
                        std::size_t end) {
    Batch batch;
    std::vector<double> values;
    values.reserve((end - begin) * ds.input_dim);
    batch.labels.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        std::size_t src = order[i];
        values.insert(values.end(), ds.row(src), ds.row(src) + ds.input_dim);
        batch.labels.push_back(ds.labels[src]);
    }
    batch.x = Tensor::from({end - begin, ds.input_dim}, std::move(values));
    return batch;
}

} // namespace detail

/// Seeded shuffled batches for one epoch. The order is a pure function of
/// (seed, epoch); a trailing partial batch is kept.
inline std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed,
                                  std::size_t epoch) {
    ds.validate();
    if (batch_size == 0) {
        throw ParameterError("batches: batch_size must be positive");
    }
    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::mt19937_64 rng(detail::mix_seed(seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<Batch> out;
    for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
        std::size_t end = std::min(begin + batch_size, ds.size());
        out.push_back(detail::take_batch(ds, order, begin, end));
    }
    return out;
}

/// Fixed-order batches for evaluation.
inline std::vector<Batch> ordered_batches(const Dataset& ds, std::size_t batch_size) {
    ds.validate();
    if (batch_size == 0) {
        throw ParameterError("ordered_batches: batch_size must be positive");
    }
    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::vector<Batch> out;
    for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
        std::size_t end = std::min(begin + batch_size, ds.size());
        out.push_back(detail::take_batch(ds, order, begin, end));
    }
    return out;
}

} // namespace era
