#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "picepr/corpus.hpp"
#include "picepr/errors.hpp"

namespace picepr {

using EmbeddingVec = std::vector<double>;

struct ContrastivePair {
    EmbeddingVec a;
    EmbeddingVec b;
    int y = 0;           // 1 = same personality
    double margin = 1.0; // hinge threshold for negative pairs
};

/// y * D^2 + (1 - y) * max(0, m - D)^2 with D the Euclidean distance.
double contrastive_loss(const ContrastivePair& pair);

/// Analytic gradient with respect to both embeddings; the hinge boundary
/// D == m uses the zero subgradient.
void contrastive_gradients(const ContrastivePair& pair, EmbeddingVec& grad_a, EmbeddingVec& grad_b);

/// Square linear map applied on top of frozen base embeddings; initialized
/// to the identity so an untrained projection is a no-op.
struct Projection {
    std::size_t dim = 0;
    std::vector<double> weights;  // dim x dim, row-major

    static Projection identity(std::size_t dim);
    EmbeddingVec apply(const EmbeddingVec& v) const;

    void save(const std::filesystem::path& path) const;
    static Projection load(const std::filesystem::path& path);
};

struct ProjectionTrainConfig {
    int epochs = 50;
    double learning_rate = 0.01;
};

/// Full-batch gradient descent on the mean contrastive loss of the pairs,
/// measured on projected embeddings. Deterministic; zero epochs returns the
/// identity projection untouched.
Projection finetune_projection_contrastive(const std::vector<ContrastivePair>& pairs,
                                           const ProjectionTrainConfig& config);

double mean_contrastive_loss(const Projection& projection,
                             const std::vector<ContrastivePair>& pairs);

/// Mean projected distance over a pair subset selected by label y.
double mean_pair_distance(const Projection& projection, const std::vector<ContrastivePair>& pairs,
                          int y);

struct PatternDistanceMatrix {
    std::vector<std::string> patterns;               // lexicographic order
    std::vector<std::vector<double>> normalized;     // min-max scaled to [0,1]

    bool symmetric(double tol = 1e-12) const;
};

/// Mean pairwise Euclidean distance between embeddings grouped by label
/// pattern, min-max normalized. The diagonal holds the within-pattern mean;
/// a degenerate spread (all means equal) normalizes to all zeros.
PatternDistanceMatrix label_pattern_distance_matrix(
    const std::vector<std::pair<EmbeddingVec, LabelVector>>& embeddings);

}  // namespace picepr
