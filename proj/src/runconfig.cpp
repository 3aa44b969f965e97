#include "polynet/runconfig.hpp"

namespace polynet {

json gen_config_to_json(const GenConfig& c)
{
    return json{{"problem", std::string(to_string(c.problem))},
                {"n", c.n},
                {"seed", c.seed},
                {"min_clusters", c.min_clusters},
                {"max_clusters", c.max_clusters},
                {"cluster_spread", c.cluster_spread},
                {"tw_max_width", c.tw_max_width},
                {"service", c.service},
                {"horizon", c.horizon},
                {"coord_max", c.coord_max},
                {"demand_max", c.demand_max},
                {"heavy_min", c.heavy_min},
                {"heavy_fraction", c.heavy_fraction}};
}

json train_config_to_json(const TrainConfig& c)
{
    return json{{"trainer", std::string(to_string(c.trainer))},
                {"k", c.k},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"epochs", c.epochs},
                {"rollouts_per_epoch", c.rollouts_per_epoch},
                {"steps_per_epoch", c.steps_per_epoch()},
                {"grad_clip", c.grad_clip},
                {"warm_start", c.warm_start_path},
                {"seed", c.seed},
                {"n", c.n},
                {"val_instances", c.val_instances},
                {"val_samples", c.val_samples},
                {"val_seed", c.val_seed},
                {"checkpoint_every_epoch", c.checkpoint_every_epoch},
                {"resume", c.resume},
                {"workers", c.workers}};
}

json search_config_to_json(const SearchConfig& c)
{
    return json{{"m", c.m},
                {"k", c.k},
                {"augment", c.augment},
                {"forced_first_move", c.forced_first_move},
                {"eas_iterations", c.eas_iterations},
                {"eas_learning_rate", c.eas_learning_rate},
                {"eas_lambda", c.eas_lambda},
                {"seed", c.seed},
                {"batch_rows", c.batch_rows}};
}

json make_manifest(const RunConfig& run, const std::vector<std::string>& outputs, const json& extra)
{
    json inputs = json::array();
    for (const auto& p : run.inputs) inputs.push_back({{"path", p.string()}, {"fnv1a64", file_hash(p)}});
    json m{{"tool", "polynet"},
           {"version", kVersion},
           {"command", run.command},
           {"argv", run.argv},
           {"seed", run.seed},
           {"config", run.settings},
           {"inputs", inputs},
           {"outputs", outputs}};
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    return m;
}

void write_manifest(const RunConfig& run, const std::vector<std::string>& outputs, const json& extra)
{
    write_text(run.out_dir / "manifest.json", make_manifest(run, outputs, extra).dump(2) + "\n");
}

}  // namespace polynet
