// frangi-net: command-line front end for the trainable multi-scale Frangi filter.

#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "frangi/commands.hpp"
#include "frangi/error.hpp"
#include "frangi/metrics.hpp"

namespace {

using frangi::Polarity;

const std::map<std::string, Polarity> kPolarityNames = {{"dark", Polarity::dark_tubes},
                                                        {"bright", Polarity::bright_tubes}};

struct SharedFlags {
    std::string params;
    std::string polarity;
    std::uint64_t seed = 0;
    int threads = 1;
};

void add_shared(CLI::App* cmd, SharedFlags& flags, bool with_seed)
{
    cmd->add_option("--params", flags.params, "FRNGNET1 parameter file (default: untrained weights)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--threads", flags.threads, "Worker threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--polarity", flags.polarity, "Suppressed eigenvalue sign: dark or bright "
                                                  "(default: from parameters, dark)")
        ->check(CLI::IsMember({"dark", "bright"}));
    if (with_seed)
        cmd->add_option("--seed", flags.seed, "Random seed")->capture_default_str();
}

std::optional<Polarity> polarity_of(const SharedFlags& flags)
{
    if (flags.polarity.empty())
        return std::nullopt;
    return kPolarityNames.at(flags.polarity);
}

std::optional<std::filesystem::path> path_of(const std::string& s)
{
    if (s.empty())
        return std::nullopt;
    return std::filesystem::path(s);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Trainable multi-scale Frangi vesselness filter"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every command");

    // filter
    SharedFlags filter_flags;
    frangi::FilterOptions filter_opt;
    std::string filter_mask;
    auto* filter = app.add_subcommand("filter", "Compute a vessel probability map and mask");
    filter->add_option("input", filter_opt.input, "Input image (PNG/PGM/PPM, >= 200x200)")
        ->required()
        ->check(CLI::ExistingFile);
    filter->add_option("-o,--output", filter_opt.out_probability,
                       "Probability map output (16-bit PNG)")
        ->required();
    filter->add_option("--mask", filter_mask, "Binary mask output (8-bit PNG)");
    filter->add_option("--threshold", filter_opt.mask_threshold, "Probability threshold for the mask")
        ->capture_default_str();
    add_shared(filter, filter_flags, false);

    // train
    SharedFlags train_flags;
    frangi::TrainOptions train_opt;
    std::string train_config, train_loss, train_metrics, train_split;
    int train_steps = 0, train_batch = 0;
    double train_lr = 0.0, train_momentum = -1.0;
    auto* train = app.add_subcommand("train", "Fine-tune the filter on image/label pairs");
    train->add_option("dataset", train_opt.dataset_dir,
                      "Directory with x.png / x_label.png pairs (optional x_fov.png)")
        ->required()
        ->check(CLI::ExistingDirectory);
    train->add_option("-o,--output", train_opt.out_params, "Trained parameter file")->required();
    train->add_option("--config", train_config, "key = value training config")
        ->check(CLI::ExistingFile);
    train->add_option("--loss-csv", train_loss, "Loss history CSV (default: <output>.loss.csv)");
    train->add_option("--metrics", train_metrics,
                      "Validation/test metrics JSON (default: <output>.metrics.json)");
    train->add_option("--steps", train_steps, "Training steps (default 1000)");
    train->add_option("--lr", train_lr, "Learning rate (default 1e-6)");
    train->add_option("--momentum", train_momentum, "Momentum (default 0.5)");
    train->add_option("--batch", train_batch, "Patches per step (default 250)");
    train->add_option("--split", train_split, "train/validation/test counts A/B/C (default 10:2:3)");
    train->add_option("--log-every", train_opt.log_every, "Print loss every N steps (0: quiet)")
        ->capture_default_str();
    add_shared(train, train_flags, true);

    // eval
    frangi::EvalOptions eval_opt;
    std::string eval_fov, eval_out;
    auto* eval = app.add_subcommand("eval", "Segmentation metrics of a probability map or mask");
    eval->add_option("prediction", eval_opt.prediction, "Probability map or mask image")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("label", eval_opt.label, "Ground-truth label image")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--threshold", eval_opt.threshold, "Binarization threshold")
        ->capture_default_str();
    eval->add_option("--fov", eval_fov, "Field-of-view mask; restricts the evaluated pixels")
        ->check(CLI::ExistingFile);
    eval->add_option("-o,--output", eval_out, "Also write the JSON report to this file");

    // overlay
    frangi::OverlayOptions overlay_opt;
    std::string overlay_bg;
    auto* overlay = app.add_subcommand(
        "overlay", "Colour overlay: label red, prediction green, overlap yellow");
    overlay->add_option("mask", overlay_opt.mask, "Predicted mask")->required()->check(
        CLI::ExistingFile);
    overlay->add_option("label", overlay_opt.label, "Ground-truth label")->required()->check(
        CLI::ExistingFile);
    overlay->add_option("-o,--output", overlay_opt.output, "RGB PNG output")->required();
    overlay->add_option("--image", overlay_bg, "Gray background for unlabeled pixels")
        ->check(CLI::ExistingFile);

    // phantom
    frangi::PhantomOptions phantom_opt;
    auto* phantom = app.add_subcommand("phantom", "Render a synthetic vessel phantom");
    phantom->add_option("spec", phantom_opt.spec, "key = value phantom spec")->required()->check(
        CLI::ExistingFile);
    phantom->add_option("--image", phantom_opt.out_image, "Image output (16-bit PNG)")->required();
    phantom->add_option("--label", phantom_opt.out_label, "Label output (8-bit PNG)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (filter->parsed()) {
            filter_opt.params = path_of(filter_flags.params);
            filter_opt.out_mask = path_of(filter_mask);
            filter_opt.polarity = polarity_of(filter_flags);
            filter_opt.threads = filter_flags.threads;
            frangi::cmd_filter(filter_opt);
        } else if (train->parsed()) {
            train_opt.config = path_of(train_config);
            train_opt.init_params = path_of(train_flags.params);
            train_opt.out_loss_csv = path_of(train_loss);
            train_opt.out_metrics = path_of(train_metrics);
            if (!train_split.empty())
                train_opt.split = train_split;
            if (train->count("--steps"))
                train_opt.steps = train_steps;
            if (train->count("--lr"))
                train_opt.learning_rate = train_lr;
            if (train->count("--momentum"))
                train_opt.momentum = train_momentum;
            if (train->count("--batch"))
                train_opt.batch_size = train_batch;
            if (train->count("--seed"))
                train_opt.seed = train_flags.seed;
            train_opt.polarity = polarity_of(train_flags);
            train_opt.threads = train_flags.threads;
            const auto summary = frangi::cmd_train(train_opt);
            std::cout << "split " << summary.split.train.size() << "/"
                      << summary.split.validation.size() << "/" << summary.split.test.size()
                      << ", loss " << summary.loss_history.front() << " -> "
                      << summary.loss_history.back() << "\n";
        } else if (eval->parsed()) {
            eval_opt.fov = path_of(eval_fov);
            eval_opt.out_json = path_of(eval_out);
            std::cout << frangi::metrics_json(frangi::cmd_eval(eval_opt)) << "\n";
        } else if (overlay->parsed()) {
            overlay_opt.background = path_of(overlay_bg);
            frangi::cmd_overlay(overlay_opt);
        } else if (phantom->parsed()) {
            frangi::cmd_phantom(phantom_opt);
        }
    } catch (const std::exception& e) {
        std::cerr << "frangi-net: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
