// mobiscope <subcommand> --config <path> --workdir <path>

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mobiscope.hpp"

int main(int argc, char** argv) {
    CLI::App app{"mobiscope: trajectories, mobility measures and name demographics from geo-tagged post logs"};
    app.footer(mobiscope::config_help());
    app.require_subcommand(1, 1);

    std::string config_path, workdir = ".";
    const std::map<std::string, std::string> about = {
        {"ingest", "parse the raw post log into posts.jsonl and ingest_report.json"},
        {"trajectories", "per-user trajectories over the study window"},
        {"metrics", "gyradius per user and monthly cumulative means"},
        {"centers", "DBSCAN activity centers and detected homes"},
        {"demographics", "race, gender and age group from profile names"},
        {"analyze", "log-log density, segment fits, histograms, tract correlation, KDE rasters"},
        {"report", "breakdown and per-group statistics as report.json"},
        {"synth", "synthetic population, reference tables and ground truth"},
        {"score", "score pipeline outputs against the synthetic ground truth"},
        {"all", "ingest through report in order"}};
    for (const auto& [name, text] : about) {
        auto* sub = app.add_subcommand(name, text);
        sub->add_option("--config", config_path, "key = value config file (optional; defaults apply)");
        sub->add_option("--workdir", workdir, "directory holding checkpoints")->capture_default_str();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        mobiscope::PipelineConfig cfg = config_path.empty() ? mobiscope::PipelineConfig{}
                                                            : mobiscope::PipelineConfig::from_file(config_path);
        cfg.apply_env();
        mobiscope::Pipeline pipeline(std::move(cfg), workdir);
        if (stage == "all") {
            pipeline.run_all();
        } else {
            pipeline.run(stage);
        }
    } catch (const mobiscope::DependencyError& e) {
        std::cerr << "mobiscope " << stage << ": dependency error: " << e.what() << '\n';
        return 3;
    } catch (const mobiscope::ConfigError& e) {
        std::cerr << "mobiscope " << stage << ": config error: " << e.what() << '\n';
        return 2;
    } catch (const mobiscope::FormatError& e) {
        std::cerr << "mobiscope " << stage << ": format error: " << e.what() << '\n';
        return 4;
    } catch (const mobiscope::GenerationError& e) {
        std::cerr << "mobiscope " << stage << ": generation error: " << e.what() << '\n';
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "mobiscope " << stage << ": error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
