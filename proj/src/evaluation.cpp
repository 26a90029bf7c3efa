#include "dtn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dtn/png_io.hpp"

namespace dtn::eval {
namespace {

constexpr int kChunk = 256;

int argmax_col(const MatF& probs, Eigen::Index col) {
    Eigen::Index best;
    probs.col(col).maxCoeff(&best);
    return static_cast<int>(best);
}

}  // namespace

double MetricsReport::class_accuracy(int digit) const {
    auto it = per_class_count.find(digit);
    if (it == per_class_count.end() || it->second == 0)
        throw UsageError("per_class_accuracy: no samples of digit " + std::to_string(digit));
    const auto c = per_class_correct.find(digit);
    return static_cast<double>(c == per_class_correct.end() ? 0 : c->second) / it->second;
}

void MetricsReport::save(const std::filesystem::path& file) const {
    std::ofstream out(file);
    out << "name=" << name << "\n";
    out.precision(17);
    out << "accuracy=" << accuracy() << "\n";
    out << "sample_count=" << sample_count << "\n";
    out << "run_config_hash=" << run_config_hash << "\n";
    for (const auto& [digit, count] : per_class_count) {
        const auto c = per_class_correct.find(digit);
        const double a = count == 0 ? 0.0
                                    : static_cast<double>(c == per_class_correct.end() ? 0
                                                                                       : c->second) /
                                          count;
        out << "per_class_accuracy." << digit << "=" << a << "\n";
        out << "per_class_count." << digit << "=" << count << "\n";
    }
}

MetricsReport MetricsReport::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw CorruptionError("cannot read metrics file " + file.string());
    MetricsReport r;
    std::string line;
    double acc = 0;
    std::map<int, double> class_acc;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
        if (k == "name") r.name = v;
        else if (k == "accuracy") acc = std::stod(v);
        else if (k == "sample_count") r.sample_count = std::stoll(v);
        else if (k == "run_config_hash") r.run_config_hash = v;
        else if (k.starts_with("per_class_count."))
            r.per_class_count[std::stoi(k.substr(16))] = std::stoll(v);
        else if (k.starts_with("per_class_accuracy."))
            class_acc[std::stoi(k.substr(19))] = std::stod(v);
    }
    r.correct = static_cast<int64_t>(std::llround(acc * r.sample_count));
    for (const auto& [digit, count] : r.per_class_count) {
        const auto it = class_acc.find(digit);
        r.per_class_correct[digit] =
            it == class_acc.end() ? 0 : static_cast<int64_t>(std::llround(it->second * count));
    }
    return r;
}

MetricsReport transferred_accuracy(const TransferFn& transfer, net::EvalClassifier& clf,
                                   const data::DatasetSplit& labeled_source,
                                   const std::string& name, const std::string& config_hash) {
    if (!labeled_source.labeled())
        throw UsageError("transferred_accuracy: source split must be labeled");
    MetricsReport r;
    r.name = name;
    r.run_config_hash = config_hash;
    const size_t n = labeled_source.size();
    for (size_t start = 0; start < n; start += kChunk) {
        const size_t take = std::min<size_t>(kChunk, n - start);
        std::vector<int> idx(take);
        std::iota(idx.begin(), idx.end(), static_cast<int>(start));
        MatF out = transfer(labeled_source.batch(idx));
        if (out.rows() == net::kImageSize * net::kImageSize)
            out = data::replicate_channels(out, {1, net::kImageSize, net::kImageSize});
        const MatF probs = clf.classify(out, false);
        for (size_t b = 0; b < take; ++b) {
            const int truth = labeled_source.label(start + b);
            const int pred = argmax_col(probs, static_cast<Eigen::Index>(b));
            ++r.sample_count;
            ++r.per_class_count[truth];
            r.per_class_correct[truth] += pred == truth;
            r.correct += pred == truth;
        }
    }
    return r;
}

MetricsReport domain_adapt_nn(const MatF& gallery, const std::vector<int>& gallery_labels,
                              const data::DatasetSplit& queries, const std::string& name,
                              const std::string& config_hash) {
    if (gallery.cols() == 0) throw UsageError("domain_adapt_nn: empty gallery");
    if (static_cast<size_t>(gallery.cols()) != gallery_labels.size())
        throw UsageError("domain_adapt_nn: gallery/label count mismatch");
    MetricsReport r;
    r.name = name;
    r.run_config_hash = config_hash;
    for (size_t q = 0; q < queries.size(); ++q) {
        const data::ImageSample s = queries.sample(q);
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index best_idx = 0;
        for (Eigen::Index g = 0; g < gallery.cols(); ++g) {
            const double d = (gallery.col(g) - s.pixels).squaredNorm();
            if (d < best) {
                best = d;
                best_idx = g;
            }
        }
        const int truth = s.label;
        const int pred = gallery_labels[best_idx];
        ++r.sample_count;
        ++r.per_class_count[truth];
        r.per_class_correct[truth] += pred == truth;
        r.correct += pred == truth;
    }
    return r;
}

RetrievalResult retrieval_rank_metrics(const MatF& probes, const MatF& gallery,
                                       const std::vector<int>& true_match_index) {
    if (probes.rows() != gallery.rows())
        throw UsageError("retrieval_rank_metrics: embedding dimension mismatch");
    if (static_cast<size_t>(probes.cols()) != true_match_index.size())
        throw UsageError("retrieval_rank_metrics: one true match index per probe required");
    RetrievalResult r;
    for (Eigen::Index p = 0; p < probes.cols(); ++p) {
        const int t = true_match_index[p];
        if (t < 0 || t >= gallery.cols())
            throw UsageError("retrieval_rank_metrics: true match index out of range");
        const double d_true = (gallery.col(t) - probes.col(p)).squaredNorm();
        int closer = 0;
        for (Eigen::Index g = 0; g < gallery.cols(); ++g) {
            if (g == t) continue;
            if ((gallery.col(g) - probes.col(p)).squaredNorm() < d_true) ++closer;
        }
        r.ranks.push_back(1 + closer);
    }
    std::vector<int> sorted = r.ranks;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    r.median_rank = n % 2 == 1 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
    r.mean_rank = std::accumulate(r.ranks.begin(), r.ranks.end(), 0.0) / n;
    r.rank_1 = static_cast<double>(std::count_if(r.ranks.begin(), r.ranks.end(),
                                                 [](int k) { return k <= 1; })) /
               n;
    r.rank_5 = static_cast<double>(std::count_if(r.ranks.begin(), r.ranks.end(),
                                                 [](int k) { return k <= 5; })) /
               n;
    return r;
}

void RetrievalResult::save(const std::filesystem::path& file) const {
    std::ofstream out(file);
    out.precision(17);
    out << "median_rank=" << median_rank << "\n"
        << "mean_rank=" << mean_rank << "\n"
        << "rank_1=" << rank_1 << "\n"
        << "rank_5=" << rank_5 << "\n";
    out << "ranks=";
    for (size_t i = 0; i < ranks.size(); ++i) out << (i ? "," : "") << ranks[i];
    out << "\n";
}

Eigen::Index representative_selection(const MatF& images, const nn::TensorShape& shape,
                                      net::FeatureNetwork& f, const TransferFn& transfer) {
    if (images.cols() == 0) throw UsageError("representative_selection: empty set");
    MatF in3 = shape.c == 1 ? data::replicate_channels(images, shape) : images;
    const MatF f_x = f.features(in3, false);
    MatF out = transfer(images);
    const nn::TensorShape out_shape{static_cast<int>(out.rows()) / (shape.h * shape.w), shape.h,
                                    shape.w};
    if (out_shape.c == 1) out = data::replicate_channels(out, out_shape);
    const MatF f_gx = f.features(out, false);
    Eigen::Index best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < images.cols(); ++i) {
        const double d = (f_x.col(i) - f_gx.col(i)).norm();
        if (d < best_dist) {
            best_dist = d;
            best = i;
        }
    }
    return best;
}

ImageGrid basis_visualization(net::GeneratorHead& g, int dims) {
    if (dims != net::kFeatureDim)
        throw UsageError("basis_visualization: dims must equal the generator input dimension");
    ImageGrid grid;
    grid.tile_shape = g.out_shape();
    grid.tiles.resize(grid.tile_shape.size(), dims);
    // Batch the basis probes; batch-size independence holds in inference mode.
    for (int start = 0; start < dims; start += kChunk) {
        const int take = std::min(kChunk, dims - start);
        MatF basis = MatF::Zero(net::kFeatureDim, take);
        for (int i = 0; i < take; ++i) basis(start + i, i) = 1.0f;
        grid.tiles.middleCols(start, take) = g.generate(basis, false);
    }
    grid.grid_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dims))));
    grid.grid_rows = (dims + grid.grid_cols - 1) / grid.grid_cols;
    return grid;
}

double mode_diversity_score(const ImageGrid& grid) {
    const Eigen::Index n = grid.tiles.cols();
    if (n < 2) throw UsageError("mode_diversity_score: need at least two tiles");
    double acc = 0;
    int64_t pairs = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            acc += (grid.tiles.col(i) - grid.tiles.col(j)).array().square().mean();
            ++pairs;
        }
    return acc / static_cast<double>(pairs);
}

std::vector<uint8_t> grid_to_bytes(const ImageGrid& grid, int* out_w, int* out_h) {
    const int th = grid.tile_shape.h, tw = grid.tile_shape.w, tc = grid.tile_shape.c;
    const int W = grid.grid_cols * tw, H = grid.grid_rows * th;
    std::vector<uint8_t> img(static_cast<size_t>(W) * H * tc, 0);
    for (Eigen::Index t = 0; t < grid.tiles.cols(); ++t) {
        const int gy = static_cast<int>(t) / grid.grid_cols;
        const int gx = static_cast<int>(t) % grid.grid_cols;
        const float* tile = grid.tiles.col(t).data();
        for (int i = 0; i < th; ++i)
            for (int j = 0; j < tw; ++j)
                for (int c = 0; c < tc; ++c)
                    img[((static_cast<size_t>(gy * th + i) * W) + gx * tw + j) * tc + c] =
                        data::from_unit_range(tile[c * th * tw + i * tw + j]);
    }
    *out_w = W;
    *out_h = H;
    return img;
}

void save_grid_png(const ImageGrid& grid, const std::filesystem::path& file) {
    png::Image img;
    img.channels = grid.tile_shape.c;
    img.pixels = grid_to_bytes(grid, &img.width, &img.height);
    png::write(file, img);
}

}  // namespace dtn::eval
