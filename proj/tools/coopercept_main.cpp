#include <string>
#include <vector>

#include "CLI11.hpp"

#include "coopercept/error.hpp"
#include "coopercept/pipeline.hpp"
#include "coopercept/util.hpp"
#include "coopercept/version.hpp"

namespace {

std::vector<coopercept::pipeline::Stage> stages_for(const std::string& name) {
    using coopercept::pipeline::Stage;
    if (name == "pupil") return {Stage::pupil};
    if (name == "fuse") return {Stage::fuse};
    if (name == "track") return {Stage::track};
    if (name == "eval") return {Stage::eval};
    return {Stage::pupil, Stage::fuse, Stage::track, Stage::eval};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaze-and-camera perception pipeline"};
    app.set_version_flag("--version", std::string(coopercept::kVersion));
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    bool literal_step6 = false;
    int jobs = 0;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"pupil", "Detect pupils in eye frames and write the gaze CSV"},
        {"fuse", "Fuse gaze patches into camera frames"},
        {"track", "Fuse gaze and detector trajectories, score against ground truth"},
        {"eval", "Score detections against ground truth boxes"},
        {"all", "Run every stage in order"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON config file")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "Output directory (overrides the config)");
        sub->add_flag("--literal-step6", literal_step6,
                      "Blend with the printed layer order instead of the illustrated one");
        sub->add_option("--jobs", jobs, "Worker threads, 0 = all cores (overrides the config)")
            ->check(CLI::NonNegativeNumber);
    }

    try {
        app.parse(argc, argv);
        CLI::App* sub = app.get_subcommands().front();
        coopercept::pipeline::PipelineConfig cfg = coopercept::pipeline::load_config(config_path);
        if (sub->count("--out") > 0) cfg.paths.out_dir = out_dir;
        if (sub->count("--literal-step6") > 0) cfg.literal_step6 = true;
        if (sub->count("--jobs") > 0) cfg.jobs = jobs;
        coopercept::pipeline::run(cfg, stages_for(sub->get_name()));
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const coopercept::EmptyInput& e) {
        coopercept::log_error(e.what());
        return 2;
    } catch (const std::exception& e) {
        coopercept::log_error(e.what());
        return 1;
    }
}
