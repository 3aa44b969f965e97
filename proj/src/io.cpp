#include "polynet/io.hpp"

#include "polynet/rng.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace polynet {

json instance_to_json(const Instance& inst)
{
    json coords = json::array();
    for (const Point& p : inst.coords) coords.push_back({p.x, p.y});
    json demands = json::array();
    json tw = json::array();
    const int first = inst.has_depot() ? 1 : 0;
    for (int i = first; i < static_cast<int>(inst.demands.size()); ++i) demands.push_back(inst.demands[i]);
    for (int i = first; i < static_cast<int>(inst.windows.size()); ++i)
        tw.push_back({inst.windows[i].earliest, inst.windows[i].latest});
    return json{{"problem", std::string(to_string(inst.problem))},
                {"id", inst.id},
                {"seed", inst.seed},
                {"coords", coords},
                {"demands", demands},
                {"capacity", inst.capacity},
                {"tw", tw},
                {"service", inst.service},
                {"horizon", inst.horizon}};
}

Instance instance_from_json(const json& j)
{
    try {
        Instance inst;
        inst.problem = parse_problem(j.at("problem").get<std::string>());
        inst.id = j.value("id", std::string());
        inst.seed = j.value("seed", std::uint64_t{0});
        for (const auto& p : j.at("coords")) inst.coords.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        if (inst.has_depot()) {
            const std::size_t n = inst.coords.size() - 1;
            inst.capacity = j.at("capacity").get<double>();
            inst.demands.push_back(0);
            for (const auto& d : j.at("demands")) inst.demands.push_back(d.get<double>());
            if (inst.demands.size() != n + 1) throw IoError("demand count does not match customer count");
            for (double d : inst.demands)
                if (d > inst.capacity) throw IoError("demand exceeds capacity");
        }
        if (inst.problem == Problem::CVRPTW) {
            inst.service = j.at("service").get<double>();
            inst.horizon = j.at("horizon").get<double>();
            inst.windows.push_back({0, inst.horizon});
            for (const auto& w : j.at("tw")) inst.windows.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
            if (inst.windows.size() != inst.coords.size()) throw IoError("window count does not match customer count");
        }
        return inst;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed instance: ") + e.what());
    }
}

void write_instances(const std::filesystem::path& path, const std::vector<Instance>& instances)
{
    std::string text;
    for (const Instance& inst : instances) {
        text += instance_to_json(inst).dump();
        text += '\n';
    }
    write_text(path, text);
}

std::vector<Instance> read_instances(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<Instance> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(instance_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

SolutionRecord to_record(const Trajectory& t)
{
    return {t.actions, t.cost, t.strategy, t.augmentation};
}

json solutions_to_json(const SolutionFile& f)
{
    json insts = json::array();
    for (const InstanceSolutions& s : f.instances) {
        json sols = json::array();
        for (const SolutionRecord& r : s.solutions)
            sols.push_back({{"actions", r.actions}, {"cost", r.cost}, {"v", r.strategy}, {"aug", r.augmentation}});
        insts.push_back({{"id", s.id}, {"best", s.best}, {"solutions", sols}});
    }
    return json{{"format", "polynet-solutions"},
                {"version", 1},
                {"problem", std::string(to_string(f.problem))},
                {"method", f.method},
                {"instances", insts}};
}

SolutionFile solutions_from_json(const json& j)
{
    try {
        if (j.value("format", std::string()) != "polynet-solutions") throw IoError("not a solution file");
        SolutionFile f;
        f.problem = parse_problem(j.at("problem").get<std::string>());
        f.method = j.value("method", std::string());
        for (const auto& ji : j.at("instances")) {
            InstanceSolutions s;
            s.id = ji.at("id").get<std::string>();
            s.best = ji.value("best", -1);
            for (const auto& js : ji.at("solutions"))
                s.solutions.push_back({js.at("actions").get<std::vector<int>>(), js.at("cost").get<double>(),
                                       js.value("v", 0), js.value("aug", 0)});
            f.instances.push_back(std::move(s));
        }
        return f;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed solution file: ") + e.what());
    }
}

void write_solutions(const std::filesystem::path& path, const SolutionFile& f)
{
    write_text(path, solutions_to_json(f).dump() + "\n");
}

SolutionFile read_solutions(const std::filesystem::path& path)
{
    return solutions_from_json(json::parse(read_text(path)));
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    // Write-then-rename so an interrupted run never leaves a torn file.
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out << text;
        if (!out) throw IoError("write failed for " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string file_hash(const std::filesystem::path& path)
{
    const std::uint64_t h = fnv1a(read_text(path));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json model_config_to_json(const ModelConfig& c)
{
    return json{{"problem", std::string(to_string(c.problem))},
                {"embed_dim", c.embed_dim},
                {"num_heads", c.num_heads},
                {"num_encoder_layers", c.num_encoder_layers},
                {"ff_dim", c.ff_dim},
                {"polynet_hidden", c.polynet_hidden},
                {"bit_len", c.bit_len},
                {"logit_clip", c.logit_clip},
                {"decoder", std::string(to_string(c.decoder))},
                {"zero_init_first_layer", c.zero_init_first_layer}};
}

ModelConfig model_config_from_json(const json& j)
{
    ModelConfig c;
    c.problem = parse_problem(j.at("problem").get<std::string>());
    c.embed_dim = j.at("embed_dim").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.num_encoder_layers = j.at("num_encoder_layers").get<int>();
    c.ff_dim = j.at("ff_dim").get<int>();
    c.polynet_hidden = j.at("polynet_hidden").get<int>();
    c.bit_len = j.at("bit_len").get<int>();
    c.logit_clip = j.at("logit_clip").get<double>();
    c.decoder = parse_decoder(j.at("decoder").get<std::string>());
    c.zero_init_first_layer = j.value("zero_init_first_layer", false);
    c.validate();
    return c;
}

}  // namespace polynet
