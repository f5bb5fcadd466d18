#include <CLI11.hpp>

#include "textgen/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"character-level language model with GAN-synthesized data augmentation"};
    app.require_subcommand(1);

    textgen::CliOptions opts;
    const std::pair<const char*, const char*> commands[] = {
        {"train-lm", "tokenize the corpus and train the language model"},
        {"train-gan", "train the sequence GAN on the encoded training split"},
        {"synthesize", "sample synthetic sequences from the trained generator"},
        {"augment-finetune", "fine-tune the language model on real + synthetic data"},
        {"eval", "report perplexity and next-token accuracy for a saved model"},
        {"compare", "train baseline, deep, and augmented models and tabulate metrics"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opts.config_path, "experiment config file")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", opts.out_override, "output directory (defaults to the config's)");
        sub->add_option("--seed-override", opts.seed_override,
                        "replace every stage seed with this value")
            ->each([&opts](const std::string&) { opts.has_seed_override = true; });
    }

    CLI11_PARSE(app, argc, argv);
    opts.command = app.get_subcommands().front()->get_name();
    return textgen::run(opts);
}
