#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dtn/data.hpp"
#include "dtn/networks.hpp"

namespace dtn::eval {

using nn::MatF;

// Batch-to-batch image map; input is a split's native batch, output is a
// batch of target-domain images.
using TransferFn = std::function<MatF(const MatF&)>;

struct MetricsReport {
    std::string name;
    int64_t correct = 0;
    int64_t sample_count = 0;
    std::map<int, int64_t> per_class_correct;
    std::map<int, int64_t> per_class_count;
    std::string run_config_hash;

    double accuracy() const {
        return sample_count == 0 ? 0.0 : static_cast<double>(correct) / sample_count;
    }
    double class_accuracy(int digit) const;

    void save(const std::filesystem::path& file) const;
    static MetricsReport load(const std::filesystem::path& file);
};

struct RetrievalResult {
    std::vector<int> ranks;  // 1-based; counts strictly closer gallery items
    double median_rank = 0;
    double mean_rank = 0;
    double rank_1 = 0;
    double rank_5 = 0;

    void save(const std::filesystem::path& file) const;
};

// Classifies transfer(x) for every sample of a labeled split against the
// split's own labels. Grayscale transfer outputs are channel-replicated
// before the classifier.
MetricsReport transferred_accuracy(const TransferFn& transfer, net::EvalClassifier& clf,
                                   const data::DatasetSplit& labeled_source,
                                   const std::string& name, const std::string& config_hash = "");

// 1-NN under Euclidean pixel distance; ties take the lowest gallery index.
MetricsReport domain_adapt_nn(const MatF& gallery, const std::vector<int>& gallery_labels,
                              const data::DatasetSplit& queries, const std::string& name,
                              const std::string& config_hash = "");

RetrievalResult retrieval_rank_metrics(const MatF& probes, const MatF& gallery,
                                       const std::vector<int>& true_match_index);

// Index of the element with the smallest representation drift
// ||f(x) - f(G(x))||; ties take the first in input order.
Eigen::Index representative_selection(const MatF& images, const nn::TensorShape& shape,
                                      net::FeatureNetwork& f, const TransferFn& transfer);

struct ImageGrid {
    MatF tiles;  // one tile per column
    nn::TensorShape tile_shape;
    int grid_cols = 0;
    int grid_rows = 0;
};

// One generated tile per standard basis vector, row-major in a
// ceil(sqrt(dims))-wide grid.
ImageGrid basis_visualization(net::GeneratorHead& g, int dims);

// Mean pairwise MSE between distinct tiles; zero means mode collapse.
double mode_diversity_score(const ImageGrid& grid);

// Assembles a tile grid into one image buffer ([-1,1] floats -> bytes).
std::vector<uint8_t> grid_to_bytes(const ImageGrid& grid, int* out_w, int* out_h);

void save_grid_png(const ImageGrid& grid, const std::filesystem::path& file);

}  // namespace dtn::eval
