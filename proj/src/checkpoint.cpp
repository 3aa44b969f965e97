#include "polynet/checkpoint.hpp"

namespace polynet {

namespace {

json group_mask_to_json(GroupMask m)
{
    json a = json::array();
    for (int g = 0; g < kNumGroups; ++g)
        if (m.on[g]) a.push_back(std::string(to_string(static_cast<ParamGroup>(g))));
    return a;
}

GroupMask group_mask_from_json(const json& j)
{
    GroupMask m = GroupMask::none();
    for (const auto& g : j) m.on[static_cast<int>(parse_group(g.get<std::string>()))] = true;
    return m;
}

template <typename T>
std::vector<double> widen(const std::vector<T>& v)
{
    return {v.begin(), v.end()};
}

}  // namespace

template <typename T>
Checkpoint make_checkpoint(const ModelConfig& cfg, const ParamStore<T>& params, const Adam<T>* adam, json meta)
{
    Checkpoint c;
    c.model = cfg;
    c.params = params.template cast<double>();
    c.meta = std::move(meta);
    if (adam) {
        OptimizerState s;
        s.config = adam->config();
        s.groups = adam->groups();
        s.steps = adam->steps();
        for (const auto& m : adam->m) s.m.push_back(widen(m));
        for (const auto& v : adam->v) s.v.push_back(widen(v));
        c.optimizer = std::move(s);
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    json params = json::array();
    for (const auto& e : ckpt.params.entries())
        params.push_back({{"name", e.name},
                          {"group", std::string(to_string(e.group))},
                          {"shape", {e.value.shape.rows, e.value.shape.cols}},
                          {"data", e.value.values}});
    json j{{"format", "polynet-checkpoint"},
           {"version", kCheckpointVersion},
           {"model", model_config_to_json(ckpt.model)},
           {"params", params},
           {"meta", ckpt.meta}};
    if (ckpt.optimizer) {
        const OptimizerState& s = *ckpt.optimizer;
        j["optimizer"] = {{"learning_rate", s.config.learning_rate},
                          {"beta1", s.config.beta1},
                          {"beta2", s.config.beta2},
                          {"eps", s.config.eps},
                          {"groups", group_mask_to_json(s.groups)},
                          {"steps", s.steps},
                          {"m", s.m},
                          {"v", s.v}};
    }
    write_text(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw IoError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    try {
        if (j.value("format", std::string()) != "polynet-checkpoint")
            throw IoError(path.string() + " is not a polynet checkpoint");
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion)
            throw IoError("unsupported checkpoint version " + std::to_string(version));
        Checkpoint c;
        c.model = model_config_from_json(j.at("model"));
        for (const auto& p : j.at("params")) {
            const Shape s{p.at("shape").at(0).get<int>(), p.at("shape").at(1).get<int>()};
            c.params.push(p.at("name").get<std::string>(), parse_group(p.at("group").get<std::string>()),
                          Tensor<double>(s, p.at("data").get<std::vector<double>>()));
        }
        if (j.contains("optimizer")) {
            const json& o = j.at("optimizer");
            OptimizerState s;
            s.config = {o.at("learning_rate").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                        o.at("eps").get<double>()};
            s.groups = group_mask_from_json(o.at("groups"));
            s.steps = o.at("steps").get<std::int64_t>();
            s.m = o.at("m").get<std::vector<std::vector<double>>>();
            s.v = o.at("v").get<std::vector<std::vector<double>>>();
            c.optimizer = std::move(s);
        }
        c.meta = j.value("meta", json::object());
        return c;
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

template <typename T>
ParamStore<T> checkpoint_params(const Checkpoint& ckpt, const PolicyModel<T>& model)
{
    ParamStore<T> p = ckpt.params.template cast<T>();
    model.check_layout(p);
    return p;
}

template <typename T>
void restore_optimizer(const OptimizerState& state, const ParamStore<T>& params, Adam<T>& adam)
{
    adam = Adam<T>(params, state.config, state.groups);
    if (state.m.size() != adam.m.size() || state.v.size() != adam.v.size())
        throw IoError("optimizer state does not match parameter layout");
    for (std::size_t i = 0; i < state.m.size(); ++i) {
        if (state.m[i].size() != adam.m[i].size() || state.v[i].size() != adam.v[i].size())
            throw IoError("optimizer moment shape mismatch at parameter " + std::to_string(i));
        std::copy(state.m[i].begin(), state.m[i].end(), adam.m[i].begin());
        std::copy(state.v[i].begin(), state.v[i].end(), adam.v[i].begin());
    }
    adam.set_steps(state.steps);
}

template Checkpoint make_checkpoint<float>(const ModelConfig&, const ParamStore<float>&, const Adam<float>*, json);
template Checkpoint make_checkpoint<double>(const ModelConfig&, const ParamStore<double>&, const Adam<double>*, json);
template ParamStore<float> checkpoint_params<float>(const Checkpoint&, const PolicyModel<float>&);
template ParamStore<double> checkpoint_params<double>(const Checkpoint&, const PolicyModel<double>&);
template void restore_optimizer<float>(const OptimizerState&, const ParamStore<float>&, Adam<float>&);
template void restore_optimizer<double>(const OptimizerState&, const ParamStore<double>&, Adam<double>&);

}  // namespace polynet
