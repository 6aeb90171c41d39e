#include "dseg/pipeline.hpp"

#include "dseg/distill.hpp"
#include "dseg/io.hpp"
#include "dseg/projection.hpp"
#include "dseg/pseudolabel.hpp"
#include "dseg/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>

namespace dseg {

namespace fs = std::filesystem;

namespace {

std::string frame_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d", id);
  return buf;
}

fs::path manifest_path(const PipelineConfig& config) {
  return config.manifest.empty() ? fs::path(config.out_dir) / "manifest.toml"
                                 : fs::path(config.manifest);
}

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw IoError(path.string() + ": missing; run the '" + producer + "' stage first");
  }
}

fs::path resolve_entry(const fs::path& base, const toml::Table& t, const std::string& key,
                       const std::string& where) {
  fs::path p = toml::require_string(t, key, where);
  if (p.is_relative()) p = base / p;
  return p.lexically_normal();
}

std::string relative_to(const fs::path& target, const fs::path& base) {
  fs::path rel = target.lexically_relative(base);
  if (rel.empty() || *rel.begin() == "..") rel = target;  // keep escapes absolute
  return rel.generic_string();
}

TrainHyper hyper_from(const TrainConfig& t, std::uint64_t seed) {
  TrainHyper h;
  h.lr = t.lr;
  h.batch = t.batch;
  h.epochs = t.epochs;
  h.hidden = t.hidden;
  h.augment = t.augment;
  h.crop = t.crop;
  h.seed = seed;
  return h;
}

ImageSegmentMap load_segmap(const PipelineConfig& config, const FrameEntry& entry) {
  fs::path path = fs::path(config.out_dir) / "project" / (frame_stem(entry.id) + "_segmap.pgm");
  require_artifact(path, "project");
  return ImageSegmentMap{read_pgm16(path)};
}

GridI load_label_grid(const fs::path& path, const std::string& producer) {
  require_artifact(path, producer);
  return read_pgm16(path);
}

}  // namespace

FrameManifest read_manifest(const fs::path& path) {
  if (!fs::exists(path)) {
    throw IoError(path.string() +
                  ": manifest not found; run the 'synth' stage first or pass --manifest");
  }
  const std::string where = path.string();
  toml::Document doc = toml::parse_file(path);
  toml::reject_unknown_keys(doc.root, {}, where);
  for (const auto& [name, _] : doc.table_arrays) {
    if (name != "frames") throw toml::Error(where + ": unknown array of tables '" + name + "'");
  }
  if (!doc.tables.empty()) {
    throw toml::Error(where + ": unexpected table '" + doc.tables.begin()->first + "'");
  }

  FrameManifest manifest;
  const fs::path base = path.parent_path();
  auto it = doc.table_arrays.find("frames");
  if (it != doc.table_arrays.end()) {
    for (const toml::Table& t : it->second) {
      toml::reject_unknown_keys(
          t, {"id", "cloud", "calib", "image", "gt_class", "gt_instance", "meta"}, where);
      FrameEntry entry;
      entry.id = static_cast<int>(toml::require_int(t, "id", where));
      entry.cloud = resolve_entry(base, t, "cloud", where);
      entry.calib = resolve_entry(base, t, "calib", where);
      entry.image = resolve_entry(base, t, "image", where);
      entry.gt_class = resolve_entry(base, t, "gt_class", where);
      entry.gt_instance = resolve_entry(base, t, "gt_instance", where);
      entry.meta = resolve_entry(base, t, "meta", where);
      manifest.frames.push_back(std::move(entry));
    }
  }
  if (manifest.frames.empty()) throw IoError(where + ": empty manifest");

  std::vector<int> ids;
  for (const FrameEntry& e : manifest.frames) ids.push_back(e.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw IoError(where + ": duplicate frame ids");
  }
  for (const FrameEntry& e : manifest.frames) {
    for (const fs::path* p :
         {&e.cloud, &e.calib, &e.image, &e.gt_class, &e.gt_instance, &e.meta}) {
      if (!fs::exists(*p)) throw IoError(where + ": referenced file missing: " + p->string());
    }
  }
  return manifest;
}

void write_manifest(const fs::path& path, const FrameManifest& manifest) {
  toml::Document doc;
  const fs::path base = path.parent_path();
  auto& frames = doc.table_arrays["frames"];
  for (const FrameEntry& e : manifest.frames) {
    toml::Table t;
    t.emplace("id", std::int64_t{e.id});
    t.emplace("cloud", relative_to(e.cloud, base));
    t.emplace("calib", relative_to(e.calib, base));
    t.emplace("image", relative_to(e.image, base));
    t.emplace("gt_class", relative_to(e.gt_class, base));
    t.emplace("gt_instance", relative_to(e.gt_instance, base));
    t.emplace("meta", relative_to(e.meta, base));
    frames.push_back(std::move(t));
  }
  toml::write_file(path, doc);
}

void write_frame_meta(const fs::path& path, const FrameMeta& meta) {
  toml::Document doc;
  doc.root.emplace("frame_id", meta.frame_id);
  doc.root.emplace("seed", static_cast<std::int64_t>(meta.seed));
  toml::Table& lidar = doc.tables["lidar"];
  lidar.emplace("beams", std::int64_t{meta.lidar.beams});
  lidar.emplace("azimuth_steps", std::int64_t{meta.lidar.azimuth_steps});
  lidar.emplace("azimuth_origin", meta.lidar.azimuth_origin);
  lidar.emplace("azimuth_span", meta.lidar.azimuth_span);
  toml::Array angles;
  for (int r = 0; r < meta.lidar.beams; ++r) angles.emplace_back(meta.lidar.elevation_angles[r]);
  lidar.emplace("elevation_angles", std::move(angles));
  toml::write_file(path, doc);
}

FrameMeta read_frame_meta(const fs::path& path) {
  const std::string where = path.string();
  toml::Document doc = toml::parse_file(path);
  FrameMeta meta;
  meta.frame_id = toml::require_string(doc.root, "frame_id", where);
  meta.seed = static_cast<std::uint64_t>(toml::require_int(doc.root, "seed", where));
  auto it = doc.tables.find("lidar");
  if (it == doc.tables.end()) throw toml::Error(where + ": missing [lidar] table");
  const toml::Table& lidar = it->second;
  meta.lidar.beams = static_cast<int>(toml::require_int(lidar, "beams", where));
  meta.lidar.azimuth_steps = static_cast<int>(toml::require_int(lidar, "azimuth_steps", where));
  meta.lidar.azimuth_origin = toml::require_double(lidar, "azimuth_origin", where);
  meta.lidar.azimuth_span = toml::require_double(lidar, "azimuth_span", where);
  std::vector<double> angles = toml::require_double_array(lidar, "elevation_angles", where);
  meta.lidar.elevation_angles =
      Eigen::Map<const Eigen::VectorXd>(angles.data(), static_cast<Eigen::Index>(angles.size()));
  meta.lidar.validate();
  return meta;
}

void write_eval_report(const fs::path& path, const EvalReport& report) {
  toml::Document doc;
  doc.root.emplace("miou", report.miou);
  doc.root.emplace("miou_defined", report.miou_defined);
  doc.root.emplace("pixel_accuracy", report.pixel_accuracy);
  doc.root.emplace("total_labeled", std::int64_t{report.total_labeled});
  doc.root.emplace("unmapped_pixel_count", std::int64_t{report.unmapped_pixel_count});
  doc.root.emplace("classes", std::int64_t{static_cast<int>(report.per_class_iou.size())});
  toml::Array mapping;
  for (int col : report.mapping.assignment) mapping.emplace_back(std::int64_t{col + 1});
  doc.root.emplace("mapping", std::move(mapping));
  toml::Array present;
  for (bool p : report.class_present) present.emplace_back(p);
  doc.root.emplace("class_present", std::move(present));
  toml::Array iou;
  for (Eigen::Index c = 0; c < report.per_class_iou.size(); ++c) {
    iou.emplace_back(report.per_class_iou[c]);
  }
  doc.root.emplace("per_class_iou", std::move(iou));
  toml::write_file(path, doc);
}

EvalReport read_eval_report(const fs::path& path) {
  const std::string where = path.string();
  toml::Document doc = toml::parse_file(path);
  EvalReport report;
  report.miou = toml::require_double(doc.root, "miou", where);
  report.miou_defined = toml::require_bool(doc.root, "miou_defined", where);
  report.pixel_accuracy = toml::require_double(doc.root, "pixel_accuracy", where);
  report.total_labeled = toml::require_int(doc.root, "total_labeled", where);
  report.unmapped_pixel_count = toml::require_int(doc.root, "unmapped_pixel_count", where);
  const toml::Value* mapping = toml::find(doc.root, "mapping");
  if (!mapping) throw toml::Error(where + ": missing key 'mapping'");
  for (const toml::Value& v : mapping->as_array(where)) {
    report.mapping.assignment.push_back(static_cast<int>(v.as_int(where)) - 1);
  }
  const toml::Value* present = toml::find(doc.root, "class_present");
  if (!present) throw toml::Error(where + ": missing key 'class_present'");
  for (const toml::Value& v : present->as_array(where)) {
    report.class_present.push_back(v.as_bool(where));
  }
  std::vector<double> iou = toml::require_double_array(doc.root, "per_class_iou", where);
  report.per_class_iou =
      Eigen::Map<const Eigen::VectorXd>(iou.data(), static_cast<Eigen::Index>(iou.size()));
  return report;
}

void write_normalized_confusion_csv(const fs::path& path, const NormalizedConfusion& normalized) {
  std::string out = "gt_class";
  for (int col : normalized.column_order) out += ",pseudo_" + std::to_string(col + 1);
  out += "\n";
  for (Eigen::Index c = 0; c < normalized.rows.rows(); ++c) {
    out += std::to_string(c);
    for (Eigen::Index j = 0; j < normalized.rows.cols(); ++j) {
      out += "," + format_double(normalized.rows(c, j));
    }
    out += "\n";
  }
  write_text_file(path, out);
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"synth",         "segment", "project",
                                                 "cluster",       "train-teacher",
                                                 "refine",        "train-student",
                                                 "eval"};
  return names;
}

namespace {

void run_synth(const PipelineConfig& config) {
  if (config.synth.frames < 0) throw std::invalid_argument("synth.frames must be non-negative");
  if (config.synth.image_width <= 0 || config.synth.image_height <= 0) {
    throw std::invalid_argument("synth image dimensions must be positive");
  }
  const fs::path out = config.out_dir;
  SensorRig rig = SensorRig::standard(config.synth.image_width, config.synth.image_height);
  SceneSpec spec;
  spec.n_objects = config.synth.n_objects;
  spec.class_count = config.synth.class_count;

  FrameManifest manifest;
  for (int i = 0; i < config.synth.frames; ++i) {
    const std::string stem = frame_stem(i);
    const fs::path dir = out / "frames" / stem;
    fs::create_directories(dir);
    const std::uint64_t frame_seed = derive_seed(config.seed, "frame", i);
    SimFrame frame = simulate_frame(frame_seed, spec, rig, stem);
    write_cloud_csv(dir / "cloud.csv", frame.cloud);
    write_calib_toml(dir / "calib.toml", frame.calib);
    write_ppm(dir / "image.ppm", frame.image);
    write_pgm16(dir / "gt_class.pgm", frame.gt_class);
    write_pgm16(dir / "gt_instance.pgm", frame.gt_instance);
    write_frame_meta(dir / "meta.toml", FrameMeta{frame.lidar, stem, frame_seed});

    FrameEntry entry;
    entry.id = i;
    entry.cloud = dir / "cloud.csv";
    entry.calib = dir / "calib.toml";
    entry.image = dir / "image.ppm";
    entry.gt_class = dir / "gt_class.pgm";
    entry.gt_instance = dir / "gt_instance.pgm";
    entry.meta = dir / "meta.toml";
    manifest.frames.push_back(std::move(entry));
  }
  const fs::path mpath = manifest_path(config);
  if (mpath.has_parent_path()) fs::create_directories(mpath.parent_path());
  write_manifest(mpath, manifest);
}

void run_segment(const PipelineConfig& config) {
  FrameManifest manifest = read_manifest(manifest_path(config));
  const fs::path out = fs::path(config.out_dir) / "segment";
  fs::create_directories(out);
  const GroundParams ground_params{config.segment.ground_max_incline};
  const SegParams seg_params{config.segment.theta, config.segment.min_segment_size};
  for (const FrameEntry& entry : manifest.frames) {
    FrameMeta meta = read_frame_meta(entry.meta);
    PointCloud cloud = read_cloud_csv(entry.cloud);
    RangeImage ri = build_range_image(cloud, meta.lidar);
    GridB ground = segment_ground(ri, meta.lidar, ground_params);
    RangeSegmentation seg = segment_objects(ri, ground, meta.lidar, seg_params);
    const std::string stem = frame_stem(entry.id);
    write_pgm16(out / (stem + "_seg.pgm"), seg.labels);
    write_range_pgm(out / (stem + "_range.pgm"), ri);
  }
}

void run_project(const PipelineConfig& config) {
  FrameManifest manifest = read_manifest(manifest_path(config));
  const fs::path out = fs::path(config.out_dir) / "project";
  fs::create_directories(out);
  const ProjectParams project_params{config.project.z_min, config.project.project_invalid,
                                     config.project.ignore_competes};
  const DensifyParams densify_params{config.project.max_radius};
  for (const FrameEntry& entry : manifest.frames) {
    const std::string stem = frame_stem(entry.id);
    FrameMeta meta = read_frame_meta(entry.meta);
    PointCloud cloud = read_cloud_csv(entry.cloud);
    CameraCalibration calib = read_calib_toml(entry.calib);

    RangeSegmentation seg;
    seg.labels = load_label_grid(fs::path(config.out_dir) / "segment" / (stem + "_seg.pgm"),
                                 "segment");
    seg.frame_id = cloud.frame_id;
    for (Eigen::Index i = 0; i < seg.labels.size(); ++i) {
      int v = seg.labels.data()[i];
      if (v <= kMaxSegmentId) seg.segment_count = std::max(seg.segment_count, v);
    }

    SparseLabelImage sparse = project_segments(seg, cloud, meta.lidar, calib, project_params);
    ImageSegmentMap segmap = densify(sparse, densify_params);
    write_pgm16(out / (stem + "_segmap.pgm"), segmap.labels);
  }
}

// Region labels present in a segment map, ascending (object ids first, then
// kGround by value order); kIgnore excluded.
std::vector<int> region_labels(const ImageSegmentMap& segmap) {
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < segmap.labels.size(); ++i) {
    int v = segmap.labels.data()[i];
    if (v != kIgnore) labels.push_back(v);
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

void run_cluster(const PipelineConfig& config) {
  FrameManifest manifest = read_manifest(manifest_path(config));
  const fs::path out = fs::path(config.out_dir) / "cluster";
  fs::create_directories(out);

  // Per frame, each region label paired with its feature row, or -1 when the
  // region is excluded from clustering and pseudo-labeled IGNORE.
  std::vector<std::vector<std::pair<int, int>>> frame_regions(manifest.frames.size());
  std::vector<ImageSegmentMap> segmaps(manifest.frames.size());
  std::vector<SegmentFeature> features;

  const bool external = !config.cluster.features_file.empty();
  std::map<std::pair<std::string, int>, int> external_index;
  if (external) {
    features = load_external_features(config.cluster.features_file);
    for (std::size_t i = 0; i < features.size(); ++i) {
      auto key = std::make_pair(features[i].frame_id, features[i].segment_id);
      if (!external_index.emplace(key, static_cast<int>(i)).second) {
        throw IoError(config.cluster.features_file + ": duplicate feature for " +
                      features[i].frame_id + " segment " + std::to_string(features[i].segment_id));
      }
    }
  }

  for (std::size_t fi = 0; fi < manifest.frames.size(); ++fi) {
    const FrameEntry& entry = manifest.frames[fi];
    segmaps[fi] = load_segmap(config, entry);
    const std::string stem = frame_stem(entry.id);
    Rgb8Image image;
    if (!external) image = read_ppm(entry.image);
    for (int label : region_labels(segmaps[fi])) {
      if (external) {
        auto it = external_index.find(std::make_pair(stem, label));
        frame_regions[fi].emplace_back(label, it == external_index.end() ? -1 : it->second);
        continue;
      }
      if (label == kGround && !config.cluster.cluster_ground) {
        frame_regions[fi].emplace_back(label, -1);
        continue;
      }
      SegmentCrop crop = crop_segment(image, segmaps[fi], label);
      if (static_cast<long>(crop.mask.count()) < config.cluster.min_crop_pixels) {
        frame_regions[fi].emplace_back(label, -1);
        continue;
      }
      SegmentFeature feat = extract_features(crop);
      feat.frame_id = stem;
      feat.segment_id = label;
      frame_regions[fi].emplace_back(label, static_cast<int>(features.size()));
      features.push_back(std::move(feat));
    }
  }

  if (features.empty()) {
    throw std::runtime_error("cluster: no segment features to cluster");
  }
  const Eigen::Index dim = features.front().vector.size();
  Eigen::MatrixXd points(static_cast<Eigen::Index>(features.size()), dim);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].vector.size() != dim) {
      throw std::runtime_error("cluster: inconsistent feature dimensions");
    }
    points.row(static_cast<Eigen::Index>(i)) = features[i].vector.transpose();
  }

  ClusterModel model =
      kmeans_fit(points, config.cluster.k, derive_seed(config.seed, "cluster"),
                 KMeansParams{config.cluster.kmeans_max_iter, config.cluster.kmeans_tol});

  if (!external) write_features_csv(out / "features.csv", features);
  write_cluster_csv(out / "model.csv", model);

  for (std::size_t fi = 0; fi < manifest.frames.size(); ++fi) {
    std::map<int, int> assignment;
    for (const auto& [label, feat_index] : frame_regions[fi]) {
      assignment[label] =
          feat_index < 0 ? kIgnore : kmeans_assign(model, features[feat_index].vector);
    }
    PseudoLabelMap pseudo = assemble_pseudo_labels(segmaps[fi], assignment);
    write_pgm16(out / (frame_stem(manifest.frames[fi].id) + "_pseudo.pgm"), pseudo.labels);
  }
}

// Shared by both training stages: per-frame pixel features paired with the
// target maps of the given stage directory.
void run_train(const PipelineConfig& config, LossKind kind) {
  FrameManifest manifest = read_manifest(manifest_path(config));
  const bool teacher = kind == LossKind::teacher;
  const fs::path out = fs::path(config.out_dir) / (teacher ? "teacher" : "student");
  fs::create_directories(out);

  std::vector<PixelFeatureMap> frames;
  std::vector<GridI> targets;
  for (const FrameEntry& entry : manifest.frames) {
    const std::string stem = frame_stem(entry.id);
    frames.push_back(pixel_features(read_ppm(entry.image)));
    const fs::path target_path =
        teacher ? fs::path(config.out_dir) / "cluster" / (stem + "_pseudo.pgm")
                : fs::path(config.out_dir) / "refine" / (stem + "_refined.pgm");
    targets.push_back(load_label_grid(target_path, teacher ? "cluster" : "refine"));
  }

  const TrainConfig& tc = teacher ? config.teacher : config.student;
  TrainHyper hyper = hyper_from(tc, derive_seed(config.seed, teacher ? "teacher" : "student"));
  TrainResult result = train(frames, targets, kind, config.cluster.k, hyper);
  write_classifier(out / "model.bin", result.params);
  write_train_log(out / "log.csv", result.trajectory);
}

void run_refine(const PipelineConfig& config) {
  FrameManifest manifest = read_manifest(manifest_path(config));
  const fs::path out = fs::path(config.out_dir) / "refine";
  fs::create_directories(out);
  const fs::path model_path = fs::path(config.out_dir) / "teacher" / "model.bin";
  require_artifact(model_path, "train-teacher");
  ClassifierParams params = read_classifier(model_path);
  const RefineParams refine_params{config.refine.vote_ground};
  for (const FrameEntry& entry : manifest.frames) {
    PixelFeatureMap feats = pixel_features(read_ppm(entry.image));
    PixelPredictionMap pred = classifier_forward(params, feats);
    ImageSegmentMap segmap = load_segmap(config, entry);
    GridI refined = refine_predictions(pred.argmax, segmap, refine_params);
    write_pgm16(out / (frame_stem(entry.id) + "_refined.pgm"), refined);
  }
}

}  // namespace

PipelineReports run_eval(const PipelineConfig& config) {
  FrameManifest manifest = read_manifest(manifest_path(config));
  const fs::path out = fs::path(config.out_dir) / "eval";
  fs::create_directories(out);

  const fs::path teacher_path = fs::path(config.out_dir) / "teacher" / "model.bin";
  const fs::path student_path = fs::path(config.out_dir) / "student" / "model.bin";
  require_artifact(teacher_path, "train-teacher");
  require_artifact(student_path, "train-student");
  ClassifierParams teacher = read_classifier(teacher_path);
  ClassifierParams student = read_classifier(student_path);

  std::vector<GridI> gts;
  int classes = 0;
  for (const FrameEntry& entry : manifest.frames) {
    gts.push_back(read_pgm16(entry.gt_class));
    for (Eigen::Index i = 0; i < gts.back().size(); ++i) {
      int v = gts.back().data()[i];
      if (v != kIgnore) classes = std::max(classes, v + 1);
    }
  }

  const int k = teacher.classes();
  ConfusionMatrix teacher_conf, student_conf;
  teacher_conf.counts.setZero(classes, k);
  student_conf.counts.setZero(classes, k);
  for (std::size_t fi = 0; fi < manifest.frames.size(); ++fi) {
    PixelFeatureMap feats = pixel_features(read_ppm(manifest.frames[fi].image));
    accumulate_confusion(teacher_conf, gts[fi], classifier_forward(teacher, feats).argmax);
    accumulate_confusion(student_conf, gts[fi], classifier_forward(student, feats).argmax);
  }

  PipelineReports reports;
  reports.teacher = evaluate(teacher_conf, hungarian_match(teacher_conf));
  reports.student = evaluate(student_conf, hungarian_match(student_conf));
  write_eval_report(out / "teacher_report.toml", reports.teacher);
  write_eval_report(out / "student_report.toml", reports.student);
  write_normalized_confusion_csv(out / "teacher_confusion.csv",
                                 normalized_confusion_report(teacher_conf, reports.teacher.mapping));
  write_normalized_confusion_csv(out / "student_confusion.csv",
                                 normalized_confusion_report(student_conf, reports.student.mapping));
  return reports;
}

void run_stage(const std::string& stage, const PipelineConfig& config) {
  if (stage == "synth") return run_synth(config);
  if (stage == "segment") return run_segment(config);
  if (stage == "project") return run_project(config);
  if (stage == "cluster") return run_cluster(config);
  if (stage == "train-teacher") return run_train(config, LossKind::teacher);
  if (stage == "refine") return run_refine(config);
  if (stage == "train-student") return run_train(config, LossKind::student);
  if (stage == "eval") {
    run_eval(config);
    return;
  }
  std::string known;
  for (const std::string& name : stage_names()) {
    if (!known.empty()) known += ", ";
    known += name;
  }
  throw std::invalid_argument("unknown stage '" + stage + "' (expected one of: " + known + ")");
}

EvalReport run_pipeline(const PipelineConfig& config) {
  for (const std::string& stage : stage_names()) {
    if (stage == "eval") break;
    run_stage(stage, config);
  }
  return run_eval(config).student;
}

}  // namespace dseg
