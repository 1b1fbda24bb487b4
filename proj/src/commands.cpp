#include "frangi/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "frangi/error.hpp"
#include "frangi/image_io.hpp"
#include "frangi/key_value.hpp"
#include "frangi/parallel.hpp"
#include "frangi/phantom.hpp"
#include "frangi/param_io.hpp"
#include "frangi/random.hpp"

namespace frangi {

namespace {

const std::vector<std::string> kImageExtensions = {".png", ".pgm", ".ppm"};

bool is_image_file(const fs::path& p)
{
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return std::find(kImageExtensions.begin(), kImageExtensions.end(), ext) !=
           kImageExtensions.end();
}

bool ends_with(const std::string& s, const std::string& suffix)
{
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void require_file(const fs::path& p, const char* what)
{
    if (!fs::is_regular_file(p))
        throw IoError(std::string(what) + " not found: " + p.string());
}

FrangiNetParams params_or_defaults(const std::optional<fs::path>& path)
{
    if (path) {
        require_file(*path, "parameter file");
        return load_params(*path);
    }
    return FrangiNetParams::defaults();
}

nlohmann::ordered_json aggregate_json(const AggregateMetrics& m)
{
    nlohmann::ordered_json j;
    j["f1"] = m.f1;
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["images"] = m.per_image.size();
    return j;
}

struct TrainSettings {
    TrainConfig cfg;
    std::optional<SplitCounts> split;
    std::optional<double> threshold;
    std::optional<double> neg_scale;
    std::optional<double> pos_scale;
    std::optional<Polarity> polarity;
};

Polarity parse_polarity(const std::string& s, int line)
{
    if (s == "dark" || s == "dark_tubes")
        return Polarity::dark_tubes;
    if (s == "bright" || s == "bright_tubes")
        return Polarity::bright_tubes;
    throw ParseError(line, "polarity must be 'dark' or 'bright'");
}

TrainSettings read_train_config(const fs::path& path)
{
    TrainSettings s;
    for (const KeyValue& kv : parse_key_value_file(path)) {
        if (kv.key == "steps") {
            s.cfg.steps = static_cast<int>(parse_integer(kv));
        } else if (kv.key == "learning_rate" || kv.key == "lr") {
            s.cfg.learning_rate = parse_double(kv);
        } else if (kv.key == "momentum") {
            s.cfg.momentum = parse_double(kv);
        } else if (kv.key == "batch_size" || kv.key == "batch") {
            s.cfg.batch_size = static_cast<int>(parse_integer(kv));
        } else if (kv.key == "seed") {
            const long long v = parse_integer(kv);
            if (v < 0)
                throw ParseError(kv.line, "seed must be non-negative");
            s.cfg.rng_seed = static_cast<std::uint64_t>(v);
        } else if (kv.key == "dice_epsilon") {
            s.cfg.dice_epsilon = parse_double(kv);
        } else if (kv.key == "split") {
            try {
                s.split = parse_split(kv.value);
            } catch (const ParameterError& e) {
                throw ParseError(kv.line, e.what());
            }
        } else if (kv.key == "threshold") {
            s.threshold = parse_double(kv);
        } else if (kv.key == "neg_scale") {
            s.neg_scale = parse_double(kv);
        } else if (kv.key == "pos_scale") {
            s.pos_scale = parse_double(kv);
        } else if (kv.key == "polarity") {
            s.polarity = parse_polarity(kv.value, kv.line);
        } else {
            throw ParseError(kv.line, "unknown key '" + kv.key + "'");
        }
    }
    return s;
}

} // namespace

// ---------------------------------------------------------------------------

TileGrid tile_grid(int width, int height)
{
    const int need = kOutputSide + 2 * kPatchMargin;
    if (width < need || height < need) {
        throw ShapeError("image is " + std::to_string(width) + "x" + std::to_string(height) +
                         "; at least " + std::to_string(need) + "x" + std::to_string(need) +
                         " is required");
    }
    TileGrid g;
    g.tiles_x = (width - 2 * kPatchMargin) / kOutputSide;
    g.tiles_y = (height - 2 * kPatchMargin) / kOutputSide;
    return g;
}

Image2D filter_image(const Image2D& img, const FrangiNetParams& params, int threads)
{
    params.validate();
    const TileGrid grid = tile_grid(img.width(), img.height());
    const auto tile_count = static_cast<std::size_t>(grid.tiles_x) * grid.tiles_y;
    std::vector<Image2D> tiles(tile_count);
    parallel_for(tile_count, threads, [&](std::size_t t) {
        const int tx = static_cast<int>(t) % grid.tiles_x;
        const int ty = static_cast<int>(t) / grid.tiles_x;
        const PixelCoord tl{grid.origin.x + tx * kOutputSide, grid.origin.y + ty * kOutputSide};
        tiles[t] = frangi_net_forward(extract_patch_set(img, tl), params);
    });

    Image2D out(img.width(), img.height(), 0.0);
    for (std::size_t t = 0; t < tile_count; ++t) {
        const int tx = static_cast<int>(t) % grid.tiles_x;
        const int ty = static_cast<int>(t) / grid.tiles_x;
        const int x0 = grid.origin.x + tx * kOutputSide;
        const int y0 = grid.origin.y + ty * kOutputSide;
        for (int y = 0; y < kOutputSide; ++y) {
            const double* src = tiles[t].row(y);
            std::copy(src, src + kOutputSide, out.row(y0 + y) + x0);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

OutputFiles::~OutputFiles()
{
    if (committed_)
        return;
    for (const auto& [staging, final_path] : files_) {
        std::error_code ec;
        fs::remove(staging, ec);
    }
}

fs::path OutputFiles::add(const fs::path& path)
{
    const fs::path parent = path.parent_path();
    if (!parent.empty() && !fs::is_directory(parent))
        throw IoError("output directory does not exist: " + parent.string());
    fs::path staging = path;
    staging.replace_filename("." + path.filename().string() + ".partial");
    files_.emplace_back(staging, path);
    return staging;
}

void OutputFiles::commit()
{
    for (const auto& [staging, final_path] : files_) {
        std::error_code ec;
        fs::rename(staging, final_path, ec);
        if (ec)
            throw IoError("cannot move " + staging.string() + " to " + final_path.string() +
                          ": " + ec.message());
    }
    committed_ = true;
}

void cmd_filter(const FilterOptions& opt)
{
    require_file(opt.input, "input image");
    if (!(opt.mask_threshold > 0.0 && opt.mask_threshold < 1.0))
        throw ParameterError("mask threshold must lie in (0, 1)");
    OutputFiles outputs;
    const fs::path prob_path = outputs.add(opt.out_probability);
    std::optional<fs::path> mask_path;
    if (opt.out_mask)
        mask_path = outputs.add(*opt.out_mask);

    FrangiNetParams params = params_or_defaults(opt.params);
    if (opt.polarity)
        params.polarity = *opt.polarity;
    const Image2D img = load_image(opt.input);
    const Image2D prob = filter_image(img, params, opt.threads);

    write_png16(prob_path, prob);
    if (mask_path)
        write_mask_png(*mask_path, binarize(prob, opt.mask_threshold));
    outputs.commit();
}

// ---------------------------------------------------------------------------

std::vector<DatasetEntry> discover_dataset(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw IoError("dataset directory not found: " + dir.string());

    std::map<std::string, fs::path> images, labels, fovs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !is_image_file(entry.path()))
            continue;
        const std::string stem = entry.path().stem().string();
        if (ends_with(stem, "_label"))
            labels[stem.substr(0, stem.size() - 6)] = entry.path();
        else if (ends_with(stem, "_fov"))
            fovs[stem.substr(0, stem.size() - 4)] = entry.path();
        else
            images[stem] = entry.path();
    }

    std::vector<DatasetEntry> out;
    std::vector<std::string> missing;
    for (const auto& [stem, path] : images) {
        auto it = labels.find(stem);
        if (it == labels.end()) {
            missing.push_back(path.filename().string());
            continue;
        }
        DatasetEntry e{stem, path, it->second, std::nullopt};
        if (auto f = fovs.find(stem); f != fovs.end())
            e.fov = f->second;
        out.push_back(std::move(e));
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing)
            list += (list.empty() ? "" : ", ") + m;
        throw Error("missing labels for: " + list);
    }
    if (out.empty())
        throw Error("no image/label pairs found in " + dir.string());
    return out;
}

SplitCounts parse_split(const std::string& text)
{
    SplitCounts s;
    char slash1 = 0, slash2 = 0;
    std::istringstream ss(text);
    if (!(ss >> s.train >> slash1 >> s.validation >> slash2 >> s.test) || slash1 != '/' ||
        slash2 != '/' || !(ss >> std::ws).eof()) {
        throw ParameterError("split must look like A/B/C, got '" + text + "'");
    }
    if (s.train < 1 || s.validation < 0 || s.test < 0)
        throw ParameterError("split needs at least one training item and non-negative counts");
    return s;
}

SplitCounts default_split(int n)
{
    SplitCounts s;
    s.validation = static_cast<int>(std::lround(n * 2.0 / 15.0));
    s.test = static_cast<int>(std::lround(n * 3.0 / 15.0));
    s.train = n - s.validation - s.test;
    if (s.train < 1) {
        s.train = n;
        s.validation = 0;
        s.test = 0;
    }
    return s;
}

DatasetSplit split_dataset(std::size_t n, const SplitCounts& counts, std::uint64_t seed)
{
    const auto total = static_cast<std::size_t>(counts.train + counts.validation + counts.test);
    if (total != n) {
        throw ParameterError("split " + std::to_string(counts.train) + "/" +
                             std::to_string(counts.validation) + "/" +
                             std::to_string(counts.test) + " does not add up to " +
                             std::to_string(n) + " items");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = keyed_rng(seed, 0x73706c6974ULL);
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[uniform_index(rng, i)]);

    DatasetSplit out;
    auto take = [&](std::vector<std::size_t>& dst, std::size_t begin, std::size_t count) {
        dst.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                   order.begin() + static_cast<std::ptrdiff_t>(begin + count));
    };
    take(out.train, 0, static_cast<std::size_t>(counts.train));
    take(out.validation, static_cast<std::size_t>(counts.train),
         static_cast<std::size_t>(counts.validation));
    take(out.test, static_cast<std::size_t>(counts.train + counts.validation),
         static_cast<std::size_t>(counts.test));
    return out;
}

AggregateMetrics evaluate_images(const std::vector<Image2D>& images,
                                 const std::vector<LabelMask>& labels,
                                 const std::vector<std::optional<LabelMask>>& fovs,
                                 const FrangiNetParams& params, int threads)
{
    AggregateMetrics agg;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const LabelMask pred = binarize(filter_image(images[i], params, threads));
        const std::optional<LabelMask>& fov = i < fovs.size() ? fovs[i] : std::nullopt;
        agg.per_image.push_back(compute_metrics(confusion(pred, labels[i], fov)));
    }
    if (!agg.per_image.empty()) {
        for (const auto& r : agg.per_image) {
            agg.f1 += r.f1;
            agg.accuracy += r.accuracy;
            agg.precision += r.precision;
            agg.recall += r.recall;
        }
        const double inv = 1.0 / static_cast<double>(agg.per_image.size());
        agg.f1 *= inv;
        agg.accuracy *= inv;
        agg.precision *= inv;
        agg.recall *= inv;
    }
    return agg;
}

TrainSummary cmd_train(const TrainOptions& opt)
{
    TrainSettings settings;
    if (opt.config) {
        require_file(*opt.config, "config file");
        settings = read_train_config(*opt.config);
    }
    TrainConfig cfg = settings.cfg;
    if (opt.steps)
        cfg.steps = *opt.steps;
    if (opt.learning_rate)
        cfg.learning_rate = *opt.learning_rate;
    if (opt.momentum)
        cfg.momentum = *opt.momentum;
    if (opt.batch_size)
        cfg.batch_size = *opt.batch_size;
    if (opt.seed)
        cfg.rng_seed = *opt.seed;
    cfg.threads = opt.threads;
    cfg.validate();

    FrangiNetParams params0 = params_or_defaults(opt.init_params);
    if (settings.threshold)
        params0.threshold = *settings.threshold;
    if (settings.neg_scale)
        params0.neg_scale = *settings.neg_scale;
    if (settings.pos_scale)
        params0.pos_scale = *settings.pos_scale;
    if (settings.polarity)
        params0.polarity = *settings.polarity;
    if (opt.polarity)
        params0.polarity = *opt.polarity;
    params0.validate();

    const std::vector<DatasetEntry> entries = discover_dataset(opt.dataset_dir);
    const int n = static_cast<int>(entries.size());
    SplitCounts counts = default_split(n);
    if (settings.split)
        counts = *settings.split;
    if (opt.split)
        counts = parse_split(*opt.split);

    OutputFiles outputs;
    const fs::path loss_path =
        outputs.add(opt.out_loss_csv.value_or(fs::path(opt.out_params.string() + ".loss.csv")));
    const fs::path metrics_path = outputs.add(
        opt.out_metrics.value_or(fs::path(opt.out_params.string() + ".metrics.json")));
    const fs::path params_path = outputs.add(opt.out_params);

    TrainSummary summary;
    summary.split = split_dataset(entries.size(), counts, cfg.rng_seed);

    std::vector<Image2D> images(entries.size());
    std::vector<LabelMask> labels(entries.size());
    std::vector<std::optional<LabelMask>> fovs(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        images[i] = load_image(entries[i].image);
        labels[i] = load_mask(entries[i].label);
        if (!labels[i].same_shape(images[i]))
            throw ShapeError(entries[i].stem + ": label dims differ from image");
        if (entries[i].fov) {
            fovs[i] = load_mask(*entries[i].fov);
            if (!fovs[i]->same_shape(images[i]))
                throw ShapeError(entries[i].stem + ": FOV dims differ from image");
        }
    }

    std::vector<LabeledImage> train_set;
    for (std::size_t idx : summary.split.train)
        train_set.push_back({images[idx], labels[idx]});

    StepObserver observer;
    if (opt.log_every > 0) {
        observer = [&](int step, double loss) {
            if ((step + 1) % opt.log_every == 0 || step + 1 == cfg.steps)
                std::cerr << "step " << (step + 1) << "/" << cfg.steps << " loss " << loss << "\n";
        };
    }
    TrainResult result = train(train_set, params0, cfg, observer);

    auto subset_metrics = [&](const std::vector<std::size_t>& idx, const FrangiNetParams& p) {
        std::vector<Image2D> im;
        std::vector<LabelMask> lb;
        std::vector<std::optional<LabelMask>> fv;
        for (std::size_t i : idx) {
            im.push_back(images[i]);
            lb.push_back(labels[i]);
            fv.push_back(fovs[i]);
        }
        return evaluate_images(im, lb, fv, p, cfg.threads);
    };

    nlohmann::ordered_json report;
    auto names = [&](const std::vector<std::size_t>& idx) {
        std::vector<std::string> out;
        for (std::size_t i : idx)
            out.push_back(entries[i].stem);
        return out;
    };
    report["split"] = {{"train", names(summary.split.train)},
                       {"validation", names(summary.split.validation)},
                       {"test", names(summary.split.test)}};
    report["steps"] = cfg.steps;
    report["initial_loss"] = result.loss_history.front();
    report["final_loss"] = result.loss_history.back();
    if (!summary.split.validation.empty()) {
        report["validation"] = {
            {"before", aggregate_json(subset_metrics(summary.split.validation, params0))},
            {"after", aggregate_json(subset_metrics(summary.split.validation, result.params))}};
    }
    if (!summary.split.test.empty()) {
        report["test"] = {
            {"before", aggregate_json(subset_metrics(summary.split.test, params0))},
            {"after", aggregate_json(subset_metrics(summary.split.test, result.params))}};
    }

    save_params(params_path, result.params);
    save_loss_history(loss_path, result.loss_history);
    {
        std::ofstream out(metrics_path, std::ios::trunc);
        if (!out)
            throw IoError("cannot write " + metrics_path.string());
        out << report.dump(2) << '\n';
    }
    outputs.commit();

    summary.loss_history = std::move(result.loss_history);
    summary.params = std::move(result.params);
    return summary;
}

// ---------------------------------------------------------------------------

MetricsReport cmd_eval(const EvalOptions& opt)
{
    require_file(opt.prediction, "prediction");
    require_file(opt.label, "label");
    if (opt.fov)
        require_file(*opt.fov, "FOV mask");
    OutputFiles outputs;
    std::optional<fs::path> json_path;
    if (opt.out_json)
        json_path = outputs.add(*opt.out_json);

    const LabelMask pred = binarize(load_image(opt.prediction), opt.threshold);
    const LabelMask truth = load_mask(opt.label);
    std::optional<LabelMask> fov;
    if (opt.fov)
        fov = load_mask(*opt.fov);
    const MetricsReport report = compute_metrics(confusion(pred, truth, fov));
    if (json_path) {
        std::ofstream out(*json_path, std::ios::trunc);
        if (!out)
            throw IoError("cannot write " + opt.out_json->string());
        out << metrics_json(report) << '\n';
    }
    outputs.commit();
    return report;
}

RgbImage render_overlay(const LabelMask& pred, const LabelMask& label,
                        const std::optional<Image2D>& background)
{
    if (!pred.same_shape(label))
        throw ShapeError("mask and label differ in size");
    if (background && !label.same_shape(*background))
        throw ShapeError("background image differs in size");
    RgbImage out{pred.width(), pred.height(), {}};
    out.rgb.resize(pred.size() * 3);
    auto p = pred.data();
    auto l = label.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::uint8_t r = 0, g = 0, b = 0;
        if (p[i] && l[i]) {
            r = 255;
            g = 255;
        } else if (l[i]) {
            r = 255;
        } else if (p[i]) {
            g = 255;
        } else if (background) {
            const double v = std::clamp(background->data()[i], 0.0, 1.0);
            r = g = b = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
        out.rgb[3 * i] = r;
        out.rgb[3 * i + 1] = g;
        out.rgb[3 * i + 2] = b;
    }
    return out;
}

void cmd_overlay(const OverlayOptions& opt)
{
    require_file(opt.mask, "mask");
    require_file(opt.label, "label");
    if (opt.background)
        require_file(*opt.background, "background image");
    OutputFiles outputs;
    const fs::path out_path = outputs.add(opt.output);

    const LabelMask pred = load_mask(opt.mask);
    const LabelMask label = load_mask(opt.label);
    std::optional<Image2D> background;
    if (opt.background)
        background = load_image(*opt.background);
    write_rgb_png(out_path, render_overlay(pred, label, background));
    outputs.commit();
}

void cmd_phantom(const PhantomOptions& opt)
{
    require_file(opt.spec, "phantom spec");
    OutputFiles outputs;
    const fs::path image_path = outputs.add(opt.out_image);
    const fs::path label_path = outputs.add(opt.out_label);
    const Phantom ph = generate_phantom(load_phantom_spec(opt.spec));
    write_png16(image_path, ph.image);
    write_mask_png(label_path, ph.label);
    outputs.commit();
}

} // namespace frangi
