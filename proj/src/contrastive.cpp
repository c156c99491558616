#include "picepr/contrastive.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

namespace picepr {

namespace {

void check_pair(const ContrastivePair& pair) {
    if (pair.a.size() != pair.b.size()) {
        throw DimensionMismatch("contrastive pair embeddings differ in length");
    }
    if (pair.y != 0 && pair.y != 1) {
        throw Error("InvalidValue", "contrastive pair label must be 0 or 1");
    }
    if (pair.margin <= 0.0) {
        throw Error("InvalidValue", "contrastive margin must be > 0");
    }
}

double euclidean(const EmbeddingVec& a, const EmbeddingVec& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

double contrastive_loss(const ContrastivePair& pair) {
    check_pair(pair);
    double d = euclidean(pair.a, pair.b);
    if (pair.y == 1) return d * d;
    double hinge = pair.margin - d;
    return hinge > 0.0 ? hinge * hinge : 0.0;
}

void contrastive_gradients(const ContrastivePair& pair, EmbeddingVec& grad_a,
                           EmbeddingVec& grad_b) {
    check_pair(pair);
    const std::size_t n = pair.a.size();
    grad_a.assign(n, 0.0);
    grad_b.assign(n, 0.0);
    double d = euclidean(pair.a, pair.b);
    if (pair.y == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            double diff = pair.a[i] - pair.b[i];
            grad_a[i] = 2.0 * diff;
            grad_b[i] = -2.0 * diff;
        }
        return;
    }
    if (d >= pair.margin || d < 1e-12) return;  // saturated hinge / subgradient 0 at D = 0
    double scale = -2.0 * (pair.margin - d) / d;
    for (std::size_t i = 0; i < n; ++i) {
        double diff = pair.a[i] - pair.b[i];
        grad_a[i] = scale * diff;
        grad_b[i] = -scale * diff;
    }
}

Projection Projection::identity(std::size_t dim) {
    Projection p;
    p.dim = dim;
    p.weights.assign(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) p.weights[i * dim + i] = 1.0;
    return p;
}

EmbeddingVec Projection::apply(const EmbeddingVec& v) const {
    if (v.size() != dim) {
        throw DimensionMismatch("projection input length " + std::to_string(v.size()) +
                                " != " + std::to_string(dim));
    }
    EmbeddingVec out(dim, 0.0);
    for (std::size_t o = 0; o < dim; ++o) {
        const double* row = weights.data() + o * dim;
        double acc = 0.0;
        for (std::size_t i = 0; i < dim; ++i) acc += row[i] * v[i];
        out[o] = acc;
    }
    return out;
}

double mean_contrastive_loss(const Projection& projection,
                             const std::vector<ContrastivePair>& pairs) {
    if (pairs.empty()) throw Error("EmptyPairs", "no contrastive pairs");
    double total = 0.0;
    for (const auto& pair : pairs) {
        ContrastivePair projected{projection.apply(pair.a), projection.apply(pair.b), pair.y,
                                  pair.margin};
        total += contrastive_loss(projected);
    }
    return total / static_cast<double>(pairs.size());
}

double mean_pair_distance(const Projection& projection, const std::vector<ContrastivePair>& pairs,
                          int y) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& pair : pairs) {
        if (pair.y != y) continue;
        total += euclidean(projection.apply(pair.a), projection.apply(pair.b));
        ++count;
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

Projection finetune_projection_contrastive(const std::vector<ContrastivePair>& pairs,
                                           const ProjectionTrainConfig& config) {
    if (pairs.empty()) throw Error("EmptyPairs", "no contrastive pairs to fine-tune on");
    const std::size_t dim = pairs.front().a.size();
    for (const auto& pair : pairs) {
        check_pair(pair);
        if (pair.a.size() != dim) {
            throw DimensionMismatch("contrastive pairs have inconsistent lengths");
        }
    }

    Projection projection = Projection::identity(dim);
    std::vector<double> grad(dim * dim);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& pair : pairs) {
            // u = P * (a - b); the loss only sees the projected difference.
            EmbeddingVec diff(dim);
            for (std::size_t i = 0; i < dim; ++i) diff[i] = pair.a[i] - pair.b[i];
            EmbeddingVec u = projection.apply(diff);
            double d2 = 0.0;
            for (double v : u) d2 += v * v;
            double d = std::sqrt(d2);

            double scale;
            if (pair.y == 1) {
                scale = 2.0;  // d(D^2)/du = 2u
            } else if (d < pair.margin && d > 1e-12) {
                scale = -2.0 * (pair.margin - d) / d;
            } else {
                continue;
            }
            for (std::size_t o = 0; o < dim; ++o) {
                double factor = scale * u[o];
                double* row = grad.data() + o * dim;
                for (std::size_t i = 0; i < dim; ++i) row[i] += factor * diff[i];
            }
        }
        double step = config.learning_rate / static_cast<double>(pairs.size());
        for (std::size_t i = 0; i < grad.size(); ++i) {
            projection.weights[i] -= step * grad[i];
        }
    }
    return projection;
}

PatternDistanceMatrix label_pattern_distance_matrix(
    const std::vector<std::pair<EmbeddingVec, LabelVector>>& embeddings) {
    std::map<std::string, std::vector<const EmbeddingVec*>> groups;
    for (const auto& [vec, labels] : embeddings) {
        std::string pattern;
        for (int b : labels.bits) pattern.push_back(b ? '1' : '0');
        groups[pattern].push_back(&vec);
    }
    if (groups.size() < 2) {
        throw Error("InsufficientPatterns",
                    "need at least two distinct label patterns, got " +
                        std::to_string(groups.size()));
    }

    PatternDistanceMatrix out;
    for (const auto& [pattern, _] : groups) out.patterns.push_back(pattern);
    const std::size_t n = out.patterns.size();
    std::vector<std::vector<double>> raw(n, std::vector<double>(n, 0.0));

    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = p; q < n; ++q) {
            const auto& gp = groups[out.patterns[p]];
            const auto& gq = groups[out.patterns[q]];
            double total = 0.0;
            std::size_t count = 0;
            if (p == q) {
                for (std::size_t i = 0; i < gp.size(); ++i) {
                    for (std::size_t j = i + 1; j < gp.size(); ++j) {
                        total += euclidean(*gp[i], *gp[j]);
                        ++count;
                    }
                }
            } else {
                for (const auto* a : gp) {
                    for (const auto* b : gq) {
                        total += euclidean(*a, *b);
                        ++count;
                    }
                }
            }
            double mean = count == 0 ? 0.0 : total / static_cast<double>(count);
            raw[p][q] = mean;
            raw[q][p] = mean;
        }
    }

    double lo = raw[0][0];
    double hi = raw[0][0];
    for (const auto& row : raw) {
        for (double v : row) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    out.normalized.assign(n, std::vector<double>(n, 0.0));
    if (hi > lo) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = 0; q < n; ++q) {
                out.normalized[p][q] = (raw[p][q] - lo) / (hi - lo);
            }
        }
    }
    return out;
}

bool PatternDistanceMatrix::symmetric(double tol) const {
    for (std::size_t p = 0; p < normalized.size(); ++p) {
        for (std::size_t q = 0; q < normalized.size(); ++q) {
            if (std::abs(normalized[p][q] - normalized[q][p]) > tol) return false;
        }
    }
    return true;
}

void Projection::save(const std::filesystem::path& path) const {
    nlohmann::ordered_json j;
    j["format"] = "picepr-projection-v1";
    j["dim"] = dim;
    j["weights"] = weights;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("IoError", "cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
}

Projection Projection::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("format", "") != "picepr-projection-v1") {
        throw Error("IoError", "unrecognized projection format in " + path.string());
    }
    Projection p;
    p.dim = j.at("dim").get<std::size_t>();
    p.weights = j.at("weights").get<std::vector<double>>();
    return p;
}

}  // namespace picepr
