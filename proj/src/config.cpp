#include "dseg/config.hpp"

#include <stdexcept>

namespace dseg {

namespace {

using toml::Table;

int get_int(const Table& t, const std::string& key, int fallback, std::string_view where) {
  const toml::Value* v = toml::find(t, key);
  return v ? static_cast<int>(v->as_int(std::string(where) + "." + key)) : fallback;
}

double get_double(const Table& t, const std::string& key, double fallback,
                  std::string_view where) {
  const toml::Value* v = toml::find(t, key);
  return v ? v->as_double(std::string(where) + "." + key) : fallback;
}

bool get_bool(const Table& t, const std::string& key, bool fallback, std::string_view where) {
  const toml::Value* v = toml::find(t, key);
  return v ? v->as_bool(std::string(where) + "." + key) : fallback;
}

std::string get_string(const Table& t, const std::string& key, std::string fallback,
                       std::string_view where) {
  const toml::Value* v = toml::find(t, key);
  return v ? v->as_string(std::string(where) + "." + key) : std::move(fallback);
}

const Table* table_of(const toml::Document& doc, const std::string& name) {
  auto it = doc.tables.find(name);
  return it == doc.tables.end() ? nullptr : &it->second;
}

TrainConfig parse_train(const Table* t, TrainConfig base, std::string_view where) {
  if (!t) return base;
  toml::reject_unknown_keys(*t, {"lr", "batch", "epochs", "hidden", "augment", "crop"}, where);
  base.lr = get_double(*t, "lr", base.lr, where);
  base.batch = get_int(*t, "batch", base.batch, where);
  base.epochs = get_int(*t, "epochs", base.epochs, where);
  base.hidden = get_int(*t, "hidden", base.hidden, where);
  base.augment = get_bool(*t, "augment", base.augment, where);
  base.crop = get_int(*t, "crop", base.crop, where);
  return base;
}

}  // namespace

PipelineConfig parse_config(const toml::Document& doc, std::string_view origin) {
  const std::string where(origin);
  PipelineConfig config;
  toml::reject_unknown_keys(doc.root, {"seed", "out_dir", "manifest"}, where);
  if (const toml::Value* v = toml::find(doc.root, "seed")) {
    std::int64_t s = v->as_int(where + ".seed");
    if (s < 0) throw toml::Error(where + ": seed must be non-negative");
    config.seed = static_cast<std::uint64_t>(s);
  }
  config.out_dir = get_string(doc.root, "out_dir", config.out_dir, where);
  config.manifest = get_string(doc.root, "manifest", config.manifest, where);

  for (const auto& [name, table] : doc.tables) {
    if (name != "synth" && name != "segment" && name != "project" && name != "cluster" &&
        name != "teacher" && name != "student" && name != "refine") {
      throw toml::Error(where + ": unknown table '" + name + "'");
    }
  }
  if (!doc.table_arrays.empty()) {
    throw toml::Error(where + ": unexpected array of tables");
  }

  if (const Table* t = table_of(doc, "synth")) {
    toml::reject_unknown_keys(
        *t, {"frames", "n_objects", "class_count", "image_width", "image_height"}, where);
    config.synth.frames = get_int(*t, "frames", config.synth.frames, where);
    config.synth.n_objects = get_int(*t, "n_objects", config.synth.n_objects, where);
    config.synth.class_count = get_int(*t, "class_count", config.synth.class_count, where);
    config.synth.image_width = get_int(*t, "image_width", config.synth.image_width, where);
    config.synth.image_height = get_int(*t, "image_height", config.synth.image_height, where);
  }
  if (const Table* t = table_of(doc, "segment")) {
    toml::reject_unknown_keys(*t, {"ground_max_incline", "theta", "min_segment_size"}, where);
    config.segment.ground_max_incline =
        get_double(*t, "ground_max_incline", config.segment.ground_max_incline, where);
    config.segment.theta = get_double(*t, "theta", config.segment.theta, where);
    config.segment.min_segment_size =
        get_int(*t, "min_segment_size", config.segment.min_segment_size, where);
  }
  if (const Table* t = table_of(doc, "project")) {
    toml::reject_unknown_keys(*t, {"z_min", "project_invalid", "ignore_competes", "max_radius"},
                              where);
    config.project.z_min = get_double(*t, "z_min", config.project.z_min, where);
    config.project.project_invalid =
        get_bool(*t, "project_invalid", config.project.project_invalid, where);
    config.project.ignore_competes =
        get_bool(*t, "ignore_competes", config.project.ignore_competes, where);
    config.project.max_radius = get_double(*t, "max_radius", config.project.max_radius, where);
  }
  if (const Table* t = table_of(doc, "cluster")) {
    toml::reject_unknown_keys(*t,
                              {"k", "kmeans_max_iter", "kmeans_tol", "min_crop_pixels",
                               "cluster_ground", "features_file"},
                              where);
    config.cluster.k = get_int(*t, "k", config.cluster.k, where);
    config.cluster.kmeans_max_iter =
        get_int(*t, "kmeans_max_iter", config.cluster.kmeans_max_iter, where);
    config.cluster.kmeans_tol = get_double(*t, "kmeans_tol", config.cluster.kmeans_tol, where);
    config.cluster.min_crop_pixels =
        get_int(*t, "min_crop_pixels", config.cluster.min_crop_pixels, where);
    config.cluster.cluster_ground =
        get_bool(*t, "cluster_ground", config.cluster.cluster_ground, where);
    config.cluster.features_file =
        get_string(*t, "features_file", config.cluster.features_file, where);
  }
  config.teacher = parse_train(table_of(doc, "teacher"), config.teacher, where);
  config.student = parse_train(table_of(doc, "student"), config.student, where);
  if (const Table* t = table_of(doc, "refine")) {
    toml::reject_unknown_keys(*t, {"vote_ground"}, where);
    config.refine.vote_ground = get_bool(*t, "vote_ground", config.refine.vote_ground, where);
  }
  return config;
}

PipelineConfig read_config(const std::filesystem::path& path) {
  return parse_config(toml::parse_file(path), path.string());
}

namespace {

Table train_to_toml(const TrainConfig& t) {
  Table table;
  table.emplace("lr", t.lr);
  table.emplace("batch", std::int64_t{t.batch});
  table.emplace("epochs", std::int64_t{t.epochs});
  table.emplace("hidden", std::int64_t{t.hidden});
  table.emplace("augment", t.augment);
  table.emplace("crop", std::int64_t{t.crop});
  return table;
}

}  // namespace

toml::Document config_to_toml(const PipelineConfig& config) {
  toml::Document doc;
  doc.root.emplace("seed", static_cast<std::int64_t>(config.seed));
  doc.root.emplace("out_dir", config.out_dir);
  if (!config.manifest.empty()) doc.root.emplace("manifest", config.manifest);

  Table& synth = doc.tables["synth"];
  synth.emplace("frames", std::int64_t{config.synth.frames});
  synth.emplace("n_objects", std::int64_t{config.synth.n_objects});
  synth.emplace("class_count", std::int64_t{config.synth.class_count});
  synth.emplace("image_width", std::int64_t{config.synth.image_width});
  synth.emplace("image_height", std::int64_t{config.synth.image_height});

  Table& segment = doc.tables["segment"];
  segment.emplace("ground_max_incline", config.segment.ground_max_incline);
  segment.emplace("theta", config.segment.theta);
  segment.emplace("min_segment_size", std::int64_t{config.segment.min_segment_size});

  Table& project = doc.tables["project"];
  project.emplace("z_min", config.project.z_min);
  project.emplace("project_invalid", config.project.project_invalid);
  project.emplace("ignore_competes", config.project.ignore_competes);
  project.emplace("max_radius", config.project.max_radius);

  Table& cluster = doc.tables["cluster"];
  cluster.emplace("k", std::int64_t{config.cluster.k});
  cluster.emplace("kmeans_max_iter", std::int64_t{config.cluster.kmeans_max_iter});
  cluster.emplace("kmeans_tol", config.cluster.kmeans_tol);
  cluster.emplace("min_crop_pixels", std::int64_t{config.cluster.min_crop_pixels});
  cluster.emplace("cluster_ground", config.cluster.cluster_ground);
  if (!config.cluster.features_file.empty()) {
    cluster.emplace("features_file", config.cluster.features_file);
  }

  doc.tables["teacher"] = train_to_toml(config.teacher);
  doc.tables["student"] = train_to_toml(config.student);
  doc.tables["refine"].emplace("vote_ground", config.refine.vote_ground);
  return doc;
}

void write_config(const std::filesystem::path& path, const PipelineConfig& config) {
  toml::write_file(path, config_to_toml(config));
}

}  // namespace dseg
