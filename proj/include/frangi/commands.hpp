#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "frangi/forward.hpp"
#include "frangi/image_io.hpp"
#include "frangi/metrics.hpp"
#include "frangi/training.hpp"

namespace frangi {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Whole-image filtering
// ---------------------------------------------------------------------------

/// Rectangle covered by non-overlapping 128×128 output tiles.
struct TileGrid {
    int tiles_x = 0;
    int tiles_y = 0;
    PixelCoord origin{kPatchMargin, kPatchMargin};

    int processed_width() const noexcept { return tiles_x * kOutputSide; }
    int processed_height() const noexcept { return tiles_y * kOutputSide; }
};

/// floor((W - 72) / 128) × floor((H - 72) / 128) tiles starting at (36, 36).
/// Throws ShapeError for images smaller than 200×200.
TileGrid tile_grid(int width, int height);

/// Probability map of the whole image; pixels outside the tile grid are 0.
Image2D filter_image(const Image2D& img, const FrangiNetParams& params, int threads = 1);

// ---------------------------------------------------------------------------
// CLI commands
// ---------------------------------------------------------------------------

/// Output files of one command. Each registered path is written through a
/// hidden staging file in the same directory; commit() renames them all into
/// place, otherwise the destructor deletes them. Existing files are never
/// touched by a failed command.
class OutputFiles {
public:
    OutputFiles() = default;
    OutputFiles(const OutputFiles&) = delete;
    OutputFiles& operator=(const OutputFiles&) = delete;
    ~OutputFiles();

    /// Registers `path` and returns the staging path to write instead.
    /// Throws IoError if the parent directory does not exist.
    fs::path add(const fs::path& path);
    void commit();

private:
    std::vector<std::pair<fs::path, fs::path>> files_; // {staging, final}
    bool committed_ = false;
};

struct FilterOptions {
    fs::path input;
    std::optional<fs::path> params;
    fs::path out_probability;
    std::optional<fs::path> out_mask;
    std::optional<Polarity> polarity;
    double mask_threshold = 0.5;
    int threads = 1;
};

void cmd_filter(const FilterOptions& opt);

struct TrainOptions {
    fs::path dataset_dir;
    std::optional<fs::path> config;
    std::optional<fs::path> init_params;
    fs::path out_params;
    std::optional<fs::path> out_loss_csv;    // default: <out_params>.loss.csv
    std::optional<fs::path> out_metrics;     // default: <out_params>.metrics.json
    std::optional<std::string> split;        // "A/B/C"
    std::optional<int> steps;
    std::optional<double> learning_rate;
    std::optional<double> momentum;
    std::optional<int> batch_size;
    std::optional<std::uint64_t> seed;
    std::optional<Polarity> polarity;
    int threads = 1;
    int log_every = 0; // 0 disables progress lines on stderr
};

/// A dataset entry found by stem matching (`x.png` ↔ `x_label.png`, optional `x_fov.png`).
struct DatasetEntry {
    std::string stem;
    fs::path image;
    fs::path label;
    std::optional<fs::path> fov;
};

/// Lists image/label pairs in `dir` sorted by stem. Throws Error naming all
/// images without a label.
std::vector<DatasetEntry> discover_dataset(const fs::path& dir);

struct SplitCounts {
    int train = 0;
    int validation = 0;
    int test = 0;
};

/// Parses "A/B/C".
SplitCounts parse_split(const std::string& text);

/// Train/validation/test sizes in the ratio 10:2:3 for n items.
SplitCounts default_split(int n);

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Seeded shuffle of [0, n) partitioned into the requested counts.
DatasetSplit split_dataset(std::size_t n, const SplitCounts& counts, std::uint64_t seed);

/// Mean of per-image metrics (each image evaluated on its full frame or FOV).
struct AggregateMetrics {
    double f1 = 0.0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::vector<MetricsReport> per_image;
};

AggregateMetrics evaluate_images(const std::vector<Image2D>& images,
                                 const std::vector<LabelMask>& labels,
                                 const std::vector<std::optional<LabelMask>>& fovs,
                                 const FrangiNetParams& params, int threads = 1);

struct TrainSummary {
    DatasetSplit split;
    std::vector<double> loss_history;
    FrangiNetParams params;
};

TrainSummary cmd_train(const TrainOptions& opt);

struct EvalOptions {
    fs::path prediction;
    fs::path label;
    std::optional<fs::path> fov;
    double threshold = 0.5;
    std::optional<fs::path> out_json;
};

MetricsReport cmd_eval(const EvalOptions& opt);

struct OverlayOptions {
    fs::path mask;
    fs::path label;
    fs::path output;
    std::optional<fs::path> background;
};

/// label only: red; prediction only: green; both: yellow; neither: background gray or black.
RgbImage render_overlay(const LabelMask& pred, const LabelMask& label,
                        const std::optional<Image2D>& background = std::nullopt);

void cmd_overlay(const OverlayOptions& opt);

struct PhantomOptions {
    fs::path spec;
    fs::path out_image;
    fs::path out_label;
};

void cmd_phantom(const PhantomOptions& opt);

} // namespace frangi
