#include "affmap/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace affmap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const fs::path& path, int line, const std::string& what) {
    std::ostringstream msg;
    msg << path.string() << ":" << line << ": " << what;
    throw std::runtime_error(msg.str());
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

double parse_double(const std::string& token, const fs::path& path, int line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(token, &used);
        if (used != token.size()) fail(path, line, "bad number '" + token + "'");
        return v;
    } catch (const std::logic_error&) {
        fail(path, line, "bad number '" + token + "'");
    }
}

json read_json(const fs::path& path) {
    auto in = open_in(path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    return j;
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

PointCloud load_cloud(const fs::path& path) {
    auto in = open_in(path);
    PointCloud cloud;
    std::string line;
    int lineno = 0;
    bool with_normals = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::vector<std::string> tokens;
        std::string tok;
        while (ss >> tok) tokens.push_back(tok);
        if (tokens.empty()) continue;
        if (tokens.size() != 3 && tokens.size() != 6)
            fail(path, lineno, "expected 3 or 6 columns");
        if (cloud.points.empty()) with_normals = tokens.size() == 6;
        if (with_normals != (tokens.size() == 6))
            fail(path, lineno, "mixed 3- and 6-column rows");
        Vec3 p{parse_double(tokens[0], path, lineno),
               parse_double(tokens[1], path, lineno),
               parse_double(tokens[2], path, lineno)};
        cloud.points.push_back(p);
        if (with_normals)
            cloud.normals.push_back({parse_double(tokens[3], path, lineno),
                                     parse_double(tokens[4], path, lineno),
                                     parse_double(tokens[5], path, lineno)});
    }
    cloud.validate();
    return cloud;
}

void save_cloud(const PointCloud& cloud, const fs::path& path) {
    auto out = open_out(path);
    const bool with_normals = cloud.has_normals();
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const Vec3& p = cloud.points[i];
        out << format_double(p.x) << ' ' << format_double(p.y) << ' '
            << format_double(p.z);
        if (with_normals) {
            const Vec3& n = cloud.normals[i];
            out << ' ' << format_double(n.x) << ' ' << format_double(n.y) << ' '
                << format_double(n.z);
        }
        out << '\n';
    }
}

void save_grid(const OccupancyGrid& grid, const fs::path& path) {
    auto out = open_out(path);
    out << "AFFGRID v1\n";
    out << "spec " << format_double(grid.spec.origin.x) << ' '
        << format_double(grid.spec.origin.y) << ' ' << format_double(grid.spec.origin.z)
        << ' ' << format_double(grid.spec.cell_size) << ' ' << grid.spec.nx << ' '
        << grid.spec.ny << ' ' << grid.spec.nz << '\n';
    out << "rle";
    std::size_t i = 0;
    while (i < grid.occupied.size()) {
        std::size_t j = i;
        while (j < grid.occupied.size() && grid.occupied[j] == grid.occupied[i]) ++j;
        out << ' ' << int(grid.occupied[i]) << ':' << (j - i);
        i = j;
    }
    out << "\nend\n";
}

OccupancyGrid load_grid(const fs::path& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) fail(path, 1, "empty file");
    if (line != "AFFGRID v1") {
        if (line.rfind("AFFGRID", 0) == 0) fail(path, 1, "unsupported version");
        fail(path, 1, "not an AFFGRID file");
    }
    if (!std::getline(in, line)) fail(path, 2, "missing spec line");
    OccupancyGrid grid;
    {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag != "spec") fail(path, 2, "missing spec line");
        std::string ox, oy, oz, cs;
        if (!(ss >> ox >> oy >> oz >> cs >> grid.spec.nx >> grid.spec.ny >>
              grid.spec.nz))
            fail(path, 2, "malformed spec line");
        grid.spec.origin = {parse_double(ox, path, 2), parse_double(oy, path, 2),
                            parse_double(oz, path, 2)};
        grid.spec.cell_size = parse_double(cs, path, 2);
    }
    if (grid.spec.nx < 1 || grid.spec.ny < 1 || grid.spec.nz < 1 ||
        grid.spec.cell_size <= 0.0)
        fail(path, 2, "invalid grid spec");
    grid.occupied.reserve(grid.spec.cell_count());
    if (!std::getline(in, line)) fail(path, 3, "missing rle line");
    {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag != "rle") fail(path, 3, "missing rle line");
        std::string run;
        while (ss >> run) {
            const auto colon = run.find(':');
            if (colon == std::string::npos) fail(path, 3, "malformed run '" + run + "'");
            const int value = std::stoi(run.substr(0, colon));
            const long count = std::stol(run.substr(colon + 1));
            if ((value != 0 && value != 1) || count <= 0)
                fail(path, 3, "malformed run '" + run + "'");
            grid.occupied.insert(grid.occupied.end(), count,
                                 static_cast<std::uint8_t>(value));
        }
    }
    if (!std::getline(in, line) || line != "end") fail(path, 4, "missing end marker");
    if (grid.occupied.size() != grid.spec.cell_count())
        fail(path, 3, "cell count does not match spec");
    return grid;
}

void save_model(const AffordanceModel& model, const fs::path& path) {
    auto out = open_out(path);
    out << "AFFMODEL v1\n";
    out << model.kind << '\n';
    out << model.w.size() << '\n';
    for (double v : model.w) out << format_double(v) << '\n';
    if (model.kind == "linear") {
        out << format_double(model.b) << '\n';
    } else if (model.kind == "ssvm") {
        if (!model.trace.empty()) {
            out << "trace " << model.trace.size() << '\n';
            for (const auto& [iter, f1] : model.trace)
                out << iter << ' ' << format_double(f1) << '\n';
        }
    } else {
        throw std::invalid_argument("unknown model kind: " + model.kind);
    }
}

AffordanceModel load_model(const fs::path& path) {
    auto in = open_in(path);
    std::string line;
    int lineno = 0;
    auto next_line = [&](const char* what) {
        if (!std::getline(in, line)) fail(path, lineno + 1, std::string("truncated file, expected ") + what);
        ++lineno;
        return line;
    };
    if (next_line("header") != "AFFMODEL v1") {
        if (line.rfind("AFFMODEL", 0) == 0) fail(path, 1, "unsupported version");
        fail(path, 1, "not an AFFMODEL file");
    }
    AffordanceModel model;
    model.kind = next_line("kind");
    if (model.kind != "linear" && model.kind != "ssvm")
        fail(path, lineno, "unknown kind '" + model.kind + "'");
    const long dim = std::stol(next_line("dimension"));
    if (dim < 0) fail(path, lineno, "negative dimension");
    model.w.resize(dim);
    for (long i = 0; i < dim; ++i)
        model.w[i] = parse_double(next_line("weight"), path, lineno);
    if (model.kind == "linear") {
        model.b = parse_double(next_line("bias"), path, lineno);
    } else if (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tag;
        std::size_t count = 0;
        if (!(ss >> tag >> count) || tag != "trace")
            fail(path, lineno, "expected trace block");
        for (std::size_t i = 0; i < count; ++i) {
            std::istringstream es(next_line("trace entry"));
            int iter = 0;
            std::string f1;
            if (!(es >> iter >> f1)) fail(path, lineno, "malformed trace entry");
            model.trace.emplace_back(iter, parse_double(f1, path, lineno));
        }
    }
    return model;
}

SkeletonModel load_skeleton(const fs::path& path) {
    const json j = read_json(path);
    if (!j.contains("affordance") || !j.contains("joints"))
        throw std::runtime_error(path.string() + ": missing affordance/joints");
    SkeletonModel skel;
    skel.affordance_id = j.at("affordance").get<std::string>();
    const auto& joints = j.at("joints");
    if (joints.size() != kJointNames.size())
        throw std::runtime_error(path.string() + ": expected exactly 15 joints");
    for (int i = 0; i < kJointCount; ++i) {
        const std::string name(kJointNames[i]);
        if (!joints.contains(name))
            throw std::runtime_error(path.string() + ": missing joint '" + name + "'");
        const auto& arr = joints.at(name);
        if (!arr.is_array() || arr.size() != 3)
            throw std::runtime_error(path.string() + ": joint '" + name +
                                     "' must be [x, y, z]");
        skel.joints[i] = {arr[0].get<double>(), arr[1].get<double>(),
                          arr[2].get<double>()};
    }
    skel.validate();
    return skel;
}

void save_skeleton(const SkeletonModel& skel, const fs::path& path) {
    json joints;
    for (int i = 0; i < kJointCount; ++i)
        joints[std::string(kJointNames[i])] = {skel.joints[i].x, skel.joints[i].y,
                                               skel.joints[i].z};
    json j;
    j["affordance"] = skel.affordance_id;
    j["joints"] = joints;
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

std::map<std::string, SkeletonModel> load_skeleton_dir(const fs::path& dir) {
    std::map<std::string, SkeletonModel> skeletons;
    if (!fs::is_directory(dir))
        throw std::runtime_error("skeleton asset directory not found: " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        SkeletonModel skel = load_skeleton(entry.path());
        skeletons[skel.affordance_id] = std::move(skel);
    }
    if (skeletons.empty())
        throw std::runtime_error("no skeleton assets in " + dir.string());
    return skeletons;
}

void save_labels(const std::map<std::string, std::vector<GroundTruthPose>>& truth,
                 const fs::path& path) {
    json list = json::array();
    for (const auto& [affordance, poses] : truth)
        for (const GroundTruthPose& p : poses)
            list.push_back({{"affordance", affordance},
                            {"ix", p.ix},
                            {"iy", p.iy},
                            {"iz", p.iz},
                            {"itheta", p.itheta}});
    auto out = open_out(path);
    out << list.dump(2) << '\n';
}

std::map<std::string, std::vector<GroundTruthPose>> load_labels(const fs::path& path) {
    const json j = read_json(path);
    std::map<std::string, std::vector<GroundTruthPose>> truth;
    for (const auto& item : j) {
        GroundTruthPose p;
        p.ix = item.at("ix").get<int>();
        p.iy = item.at("iy").get<int>();
        p.iz = item.at("iz").get<int>();
        p.itheta = item.at("itheta").get<int>();
        truth[item.at("affordance").get<std::string>()].push_back(p);
    }
    return truth;
}

namespace {

const char* kind_name(FurnitureKind kind) {
    switch (kind) {
        case FurnitureKind::chair: return "chair";
        case FurnitureKind::sofa: return "sofa";
        case FurnitureKind::desk: return "desk";
        default: return "bench";
    }
}

FurnitureKind kind_from_name(const std::string& name) {
    if (name == "chair") return FurnitureKind::chair;
    if (name == "sofa") return FurnitureKind::sofa;
    if (name == "desk") return FurnitureKind::desk;
    if (name == "bench") return FurnitureKind::bench;
    throw std::runtime_error("unknown furniture kind: " + name);
}

}  // namespace

void save_room_spec(const RoomSpec& spec, const std::vector<SeatInfo>& seats,
                    const fs::path& path) {
    json items = json::array();
    for (const FurnitureItem& it : spec.furniture)
        items.push_back({{"kind", kind_name(it.kind)},
                         {"x", it.x},
                         {"y", it.y},
                         {"facing", it.facing},
                         {"seat_height", it.seat_height},
                         {"seat_size", it.seat_size},
                         {"backrest", it.backrest},
                         {"length", it.length},
                         {"height", it.height},
                         {"top_x", it.top_x},
                         {"top_y", it.top_y}});
    json seat_list = json::array();
    for (const SeatInfo& s : seats)
        seat_list.push_back({{"affordance", s.affordance},
                             {"x", s.x},
                             {"y", s.y},
                             {"facing", s.facing}});
    json j;
    j["name"] = spec.name;
    j["extent"] = {spec.extent_x, spec.extent_y, spec.extent_z};
    j["wall_thickness"] = spec.wall_thickness;
    j["floor_thickness"] = spec.floor_thickness;
    j["seed"] = spec.seed;
    j["furniture"] = items;
    j["seats"] = seat_list;
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

RoomSpec load_room_spec(const fs::path& path, std::vector<SeatInfo>* seats) {
    const json j = read_json(path);
    RoomSpec spec;
    spec.name = j.at("name").get<std::string>();
    spec.extent_x = j.at("extent")[0].get<double>();
    spec.extent_y = j.at("extent")[1].get<double>();
    spec.extent_z = j.at("extent")[2].get<double>();
    spec.wall_thickness = j.at("wall_thickness").get<double>();
    spec.floor_thickness = j.at("floor_thickness").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& item : j.at("furniture")) {
        FurnitureItem it;
        it.kind = kind_from_name(item.at("kind").get<std::string>());
        it.x = item.at("x").get<double>();
        it.y = item.at("y").get<double>();
        it.facing = item.at("facing").get<double>();
        it.seat_height = item.at("seat_height").get<double>();
        it.seat_size = item.at("seat_size").get<double>();
        it.backrest = item.at("backrest").get<bool>();
        it.length = item.at("length").get<double>();
        it.height = item.at("height").get<double>();
        it.top_x = item.at("top_x").get<double>();
        it.top_y = item.at("top_y").get<double>();
        spec.furniture.push_back(it);
    }
    if (seats && j.contains("seats")) {
        for (const auto& s : j.at("seats"))
            seats->push_back({s.at("affordance").get<std::string>(),
                              s.at("x").get<double>(), s.at("y").get<double>(),
                              s.at("facing").get<double>()});
    }
    return spec;
}

void save_dataset(const SceneDataset& dataset,
                  const std::map<std::string, std::vector<SeatInfo>>& seats,
                  double theta_step, std::uint64_t seed, const fs::path& dir,
                  const std::vector<PointCloud>& clouds) {
    if (clouds.size() != dataset.scenes.size())
        throw std::invalid_argument("cloud count does not match scenes");
    fs::create_directories(dir / "rooms");
    json suite;
    suite["affordances"] = dataset.affordances;
    suite["theta_step"] = theta_step;
    suite["seed"] = seed;
    json rooms = json::array();
    for (const SceneData& scene : dataset.scenes) rooms.push_back(scene.name);
    suite["rooms"] = rooms;
    {
        auto out = open_out(dir / "suite.json");
        out << suite.dump(2) << '\n';
    }
    for (std::size_t i = 0; i < dataset.scenes.size(); ++i) {
        const SceneData& scene = dataset.scenes[i];
        save_cloud(clouds[i], dir / "rooms" / (scene.name + ".xyz"));
        save_labels(scene.truth, dir / "rooms" / (scene.name + ".labels.json"));
        json seat_list = json::array();
        const auto it = seats.find(scene.name);
        if (it != seats.end())
            for (const SeatInfo& s : it->second)
                seat_list.push_back({{"affordance", s.affordance},
                                     {"x", s.x},
                                     {"y", s.y},
                                     {"facing", s.facing}});
        json meta;
        meta["name"] = scene.name;
        meta["seats"] = seat_list;
        auto out = open_out(dir / "rooms" / (scene.name + ".room.json"));
        out << meta.dump(2) << '\n';
    }
}

SceneDataset load_dataset(const fs::path& dir,
                          const std::map<std::string, SkeletonModel>& skeletons,
                          double* theta_step) {
    const json suite = read_json(dir / "suite.json");
    SceneDataset dataset;
    dataset.skeletons = skeletons;
    for (const auto& a : suite.at("affordances"))
        dataset.affordances.push_back(a.get<std::string>());
    if (theta_step) *theta_step = suite.at("theta_step").get<double>();

    for (const auto& room : suite.at("rooms")) {
        const std::string name = room.get<std::string>();
        SceneData scene;
        scene.name = name;
        const PointCloud cloud = load_cloud(dir / "rooms" / (name + ".xyz"));
        scene.fields = build_scene(cloud, 0.1, kScenePadding);
        scene.floor_z = estimate_floor(scene.fields.occ);
        scene.truth = load_labels(dir / "rooms" / (name + ".labels.json"));
        const fs::path meta_path = dir / "rooms" / (name + ".room.json");
        if (fs::exists(meta_path)) {
            const json meta = read_json(meta_path);
            if (meta.contains("seats"))
                for (const auto& s : meta.at("seats"))
                    scene.seats.push_back({s.at("affordance").get<std::string>(),
                                           s.at("x").get<double>(),
                                           s.at("y").get<double>(),
                                           s.at("facing").get<double>()});
        }
        dataset.scenes.push_back(std::move(scene));
    }
    return dataset;
}

void save_map(const AffordanceMap& map, const fs::path& dir, const std::string& stem) {
    fs::create_directories(dir);

    // Skeleton list.
    json skeletons = json::array();
    for (const PlacedSkeleton& s : map.skeletons)
        skeletons.push_back({{"x", s.pose.x},
                             {"y", s.pose.y},
                             {"z", s.pose.z},
                             {"theta", s.pose.theta},
                             {"margin", s.margin}});
    json j;
    j["affordance"] = map.affordance;
    j["skeletons"] = skeletons;
    {
        auto out = open_out(dir / (stem + ".skeletons.json"));
        out << j.dump(2) << '\n';
    }

    // Contour CSV: one row per y index.
    {
        auto out = open_out(dir / (stem + ".contour.csv"));
        const int nx = map.lattice.spec.nx, ny = map.lattice.spec.ny;
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                if (ix) out << ',';
                out << format_double(map.contour[static_cast<std::size_t>(iy) * nx + ix]);
            }
            out << '\n';
        }
    }

    // 8-bit PGM heatmap plus the margin range needed to invert it.
    {
        const int nx = map.lattice.spec.nx, ny = map.lattice.spec.ny;
        auto out = open_out(dir / (stem + ".contour.pgm"));
        out << "P5\n" << nx << ' ' << ny << "\n255\n";
        const double range = map.contour_max - map.contour_min;
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                const double v = map.contour[static_cast<std::size_t>(iy) * nx + ix];
                const int pixel =
                    range > 0.0
                        ? static_cast<int>(std::lround(255.0 * (v - map.contour_min) / range))
                        : 0;
                out.put(static_cast<char>(std::clamp(pixel, 0, 255)));
            }
        auto side = open_out(dir / (stem + ".contour.pgm.range"));
        side << "min " << format_double(map.contour_min) << '\n'
             << "max " << format_double(map.contour_max) << '\n';
    }
}

std::vector<PlacedSkeleton> load_map_skeletons(const fs::path& path) {
    const json j = read_json(path);
    std::vector<PlacedSkeleton> out;
    for (const auto& s : j.at("skeletons"))
        out.push_back({{s.at("x").get<double>(), s.at("y").get<double>(),
                        s.at("z").get<double>(), s.at("theta").get<double>()},
                       s.at("margin").get<double>()});
    return out;
}

PipelineParams RunConfig::pipeline_params() const {
    PipelineParams params;
    params.theta_step = theta_step;
    params.seed = seed;
    params.svm.c = c;
    params.svm.c_pos = c_pos;
    params.svm.c_neg = c_neg;
    params.svm.seed = seed;
    params.ssvm.c = ssvm_c;
    params.ssvm.epsilon = epsilon;
    params.ssvm.seed = seed;
    params.focused_band = band;
    return params;
}

RunConfig load_config(const fs::path& path) {
    const json j = read_json(path);
    static const std::vector<std::string> known = {
        "cell_size", "theta_step", "c",     "c_pos",      "c_neg", "epsilon",
        "ssvm_c",    "z_grid",     "band",  "seed",       "method", "k",
        "assets_dir", "output_dir"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw std::runtime_error(path.string() + ": unknown config key '" + key +
                                     "'");
    }
    RunConfig cfg;
    if (j.contains("cell_size")) cfg.cell_size = j.at("cell_size").get<double>();
    if (j.contains("theta_step")) cfg.theta_step = j.at("theta_step").get<double>();
    if (j.contains("c")) cfg.c = j.at("c").get<double>();
    if (j.contains("c_pos")) cfg.c_pos = j.at("c_pos").get<double>();
    if (j.contains("c_neg")) cfg.c_neg = j.at("c_neg").get<double>();
    if (j.contains("epsilon")) cfg.epsilon = j.at("epsilon").get<double>();
    if (j.contains("ssvm_c")) cfg.ssvm_c = j.at("ssvm_c").get<double>();
    if (j.contains("z_grid")) cfg.z_grid = j.at("z_grid").get<std::vector<double>>();
    if (j.contains("band")) cfg.band = j.at("band").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("method")) cfg.method = j.at("method").get<std::string>();
    if (j.contains("k")) cfg.k = j.at("k").get<int>();
    if (j.contains("assets_dir")) cfg.assets_dir = j.at("assets_dir").get<std::string>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (cfg.cell_size <= 0.0 || cfg.theta_step <= 0.0 || cfg.c <= 0.0 ||
        cfg.epsilon <= 0.0 || cfg.k < 2)
        throw std::runtime_error(path.string() + ": invalid config values");
    return cfg;
}

void save_config(const RunConfig& cfg, const fs::path& path) {
    json j;
    j["cell_size"] = cfg.cell_size;
    j["theta_step"] = cfg.theta_step;
    j["c"] = cfg.c;
    j["c_pos"] = cfg.c_pos;
    j["c_neg"] = cfg.c_neg;
    j["epsilon"] = cfg.epsilon;
    j["ssvm_c"] = cfg.ssvm_c;
    if (!cfg.z_grid.empty()) j["z_grid"] = cfg.z_grid;
    j["band"] = cfg.band;
    j["seed"] = cfg.seed;
    j["method"] = cfg.method;
    j["k"] = cfg.k;
    if (!cfg.assets_dir.empty()) j["assets_dir"] = cfg.assets_dir;
    if (!cfg.output_dir.empty()) j["output_dir"] = cfg.output_dir;
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

}  // namespace affmap
