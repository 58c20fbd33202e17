#include "coopdet/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "coopdet/pillars.hpp"
#include "coopdet/rng.hpp"

namespace fs = std::filesystem;

namespace coopdet {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& tok, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw std::runtime_error(where + ": bad number '" + tok + "'");
  return v;
}

long parse_long(const std::string& tok, const std::string& where) {
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0')
    throw std::runtime_error(where + ": bad integer '" + tok + "'");
  return v;
}

}  // namespace

DatasetSplits split_frames(int frames, uint64_t seed) {
  if (frames < 0) throw std::invalid_argument("negative frame count");
  std::vector<uint32_t> ids(static_cast<size_t>(frames));
  for (int i = 0; i < frames; ++i) ids[static_cast<size_t>(i)] = static_cast<uint32_t>(i);
  SplitMix64 rng = SplitMix64(seed).fork(5);  // split shuffle substream
  for (size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[rng.uniform_index(i)]);

  const size_t n = ids.size();
  const size_t n_train = n * 6 / 10;
  const size_t n_val = n * 2 / 10;
  DatasetSplits splits;
  splits.train.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
  splits.val.assign(ids.begin() + static_cast<long>(n_train),
                    ids.begin() + static_cast<long>(n_train + n_val));
  splits.test.assign(ids.begin() + static_cast<long>(n_train + n_val), ids.end());
  std::sort(splits.train.begin(), splits.train.end());
  std::sort(splits.val.begin(), splits.val.end());
  std::sort(splits.test.begin(), splits.test.end());
  return splits;
}

std::string format_frame_text(const SceneFrame& frame) {
  std::ostringstream os;
  os << "frame " << frame.frame_id << "\n";
  const auto& vp = frame.vehicle_pose;
  os << "vehicle_pose " << fmt_double(vp.position[0]) << ' '
     << fmt_double(vp.position[1]) << ' ' << fmt_double(vp.position[2]) << ' '
     << fmt_double(vp.yaw) << "\n";
  for (size_t k = 0; k < frame.infra_poses.size(); ++k) {
    const auto& p = frame.infra_poses[k];
    os << "infra_pose " << k << ' ' << fmt_double(p.position[0]) << ' '
       << fmt_double(p.position[1]) << ' ' << fmt_double(p.position[2]) << ' '
       << fmt_double(p.yaw) << "\n";
  }
  if (frame.difficulty.size() != frame.objects.size())
    throw std::invalid_argument("frame is missing difficulty tags");
  for (size_t i = 0; i < frame.objects.size(); ++i) {
    const SceneObject& obj = frame.objects[i];
    const DifficultyTag& tag = frame.difficulty[i];
    os << "object " << obj.id << ' ' << class_name(obj.cls) << ' '
       << fmt_double(obj.box.center[0]) << ' ' << fmt_double(obj.box.center[1]) << ' '
       << fmt_double(obj.box.center[2]) << ' ' << fmt_double(obj.box.width) << ' '
       << fmt_double(obj.box.length) << ' ' << fmt_double(obj.box.height) << ' '
       << fmt_double(obj.box.yaw) << ' ' << occlusion_name(tag.occlusion) << ' '
       << range_name(tag.range) << "\n";
  }
  auto visible_rows = [&os, &frame](const SensorObservation& obs, size_t sensor) {
    for (size_t i = 0; i < frame.objects.size(); ++i) {
      os << "visible " << sensor << ' ' << frame.objects[i].id << ' '
         << obs.visible_points[i] << ' ' << obs.visible_rays[i] << ' '
         << obs.potential_rays[i] << "\n";
    }
  };
  visible_rows(frame.vehicle_obs, 0);
  for (size_t k = 0; k < frame.infra_obs.size(); ++k)
    visible_rows(frame.infra_obs[k], k + 1);
  os << "oracle_best " << frame.oracle_best << "\n";
  return os.str();
}

SceneFrame parse_frame_text(std::istream& in, const std::string& where) {
  SceneFrame frame;
  std::vector<int> object_index;  // id -> position
  bool saw_frame = false, saw_vehicle = false, saw_best = false;
  std::string line;
  int line_no = 0;

  auto ensure_obs = [&frame](size_t sensor) -> SensorObservation& {
    if (sensor == 0) return frame.vehicle_obs;
    if (frame.infra_obs.size() < sensor) frame.infra_obs.resize(sensor);
    return frame.infra_obs[sensor - 1];
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string ctx = where + ":" + std::to_string(line_no);
    const std::string& kw = tok[0];

    if (kw == "frame") {
      if (tok.size() != 2) throw std::runtime_error(ctx + ": frame wants one id");
      frame.frame_id = static_cast<uint32_t>(parse_long(tok[1], ctx));
      saw_frame = true;
    } else if (kw == "vehicle_pose") {
      if (tok.size() != 5) throw std::runtime_error(ctx + ": vehicle_pose wants 4 fields");
      frame.vehicle_pose.position = {parse_double(tok[1], ctx), parse_double(tok[2], ctx),
                                     parse_double(tok[3], ctx)};
      frame.vehicle_pose.yaw = parse_double(tok[4], ctx);
      saw_vehicle = true;
    } else if (kw == "infra_pose") {
      if (tok.size() != 6) throw std::runtime_error(ctx + ": infra_pose wants 5 fields");
      const size_t k = static_cast<size_t>(parse_long(tok[1], ctx));
      if (k != frame.infra_poses.size())
        throw std::runtime_error(ctx + ": responder poses must appear in order");
      Pose p;
      p.position = {parse_double(tok[2], ctx), parse_double(tok[3], ctx),
                    parse_double(tok[4], ctx)};
      p.yaw = parse_double(tok[5], ctx);
      frame.infra_poses.push_back(p);
    } else if (kw == "object") {
      if (tok.size() != 12) throw std::runtime_error(ctx + ": object wants 11 fields");
      SceneObject obj;
      obj.id = static_cast<int>(parse_long(tok[1], ctx));
      obj.cls = parse_class(tok[2]);
      obj.box.center = {parse_double(tok[3], ctx), parse_double(tok[4], ctx),
                        parse_double(tok[5], ctx)};
      obj.box.width = parse_double(tok[6], ctx);
      obj.box.length = parse_double(tok[7], ctx);
      obj.box.height = parse_double(tok[8], ctx);
      obj.box.yaw = parse_double(tok[9], ctx);
      validate_box(obj.box);
      DifficultyTag tag;
      tag.occlusion = parse_occlusion(tok[10]);
      tag.range = parse_range(tok[11]);
      frame.objects.push_back(obj);
      frame.difficulty.push_back(tag);
      if (obj.id >= static_cast<int>(object_index.size()))
        object_index.resize(static_cast<size_t>(obj.id) + 1, -1);
      object_index[static_cast<size_t>(obj.id)] =
          static_cast<int>(frame.objects.size()) - 1;
    } else if (kw == "visible") {
      if (tok.size() != 6) throw std::runtime_error(ctx + ": visible wants 5 fields");
      const size_t sensor = static_cast<size_t>(parse_long(tok[1], ctx));
      const long id = parse_long(tok[2], ctx);
      if (id < 0 || id >= static_cast<long>(object_index.size()) ||
          object_index[static_cast<size_t>(id)] < 0)
        throw std::runtime_error(ctx + ": visible row names unknown object " +
                                 std::to_string(id));
      const size_t pos = static_cast<size_t>(object_index[static_cast<size_t>(id)]);
      SensorObservation& obs = ensure_obs(sensor);
      if (obs.visible_points.size() < frame.objects.size()) {
        obs.visible_points.resize(frame.objects.size(), 0);
        obs.visible_rays.resize(frame.objects.size(), 0);
        obs.potential_rays.resize(frame.objects.size(), 0);
      }
      obs.visible_points[pos] = static_cast<int>(parse_long(tok[3], ctx));
      obs.visible_rays[pos] = static_cast<int>(parse_long(tok[4], ctx));
      obs.potential_rays[pos] = static_cast<int>(parse_long(tok[5], ctx));
    } else if (kw == "oracle_best") {
      if (tok.size() != 2) throw std::runtime_error(ctx + ": oracle_best wants one id");
      frame.oracle_best = static_cast<int>(parse_long(tok[1], ctx));
      saw_best = true;
    } else {
      throw std::runtime_error(ctx + ": unknown record '" + kw + "'");
    }
  }
  if (!saw_frame || !saw_vehicle || !saw_best)
    throw std::runtime_error(where + ": frame, vehicle_pose and oracle_best are required");
  // Sensors that produced no visible rows still need zeroed counters.
  if (frame.vehicle_obs.visible_points.size() != frame.objects.size()) {
    frame.vehicle_obs.visible_points.resize(frame.objects.size(), 0);
    frame.vehicle_obs.visible_rays.resize(frame.objects.size(), 0);
    frame.vehicle_obs.potential_rays.resize(frame.objects.size(), 0);
  }
  frame.infra_obs.resize(frame.infra_poses.size());
  for (auto& obs : frame.infra_obs) {
    if (obs.visible_points.size() != frame.objects.size()) {
      obs.visible_points.resize(frame.objects.size(), 0);
      obs.visible_rays.resize(frame.objects.size(), 0);
      obs.potential_rays.resize(frame.objects.size(), 0);
    }
  }
  return frame;
}

void write_frame_dir(const std::string& dir, const SceneFrame& frame) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir + "/scene.txt");
    if (!out) throw std::runtime_error("cannot write " + dir + "/scene.txt");
    out << format_frame_text(frame);
  }
  write_cloud_file(dir + "/cloud_vehicle.bin", frame.vehicle_obs.cloud);
  for (size_t k = 0; k < frame.infra_obs.size(); ++k)
    write_cloud_file(dir + "/cloud_infra_" + std::to_string(k) + ".bin",
                     frame.infra_obs[k].cloud);
}

SceneFrame read_frame_dir(const std::string& dir) {
  std::ifstream in(dir + "/scene.txt");
  if (!in) throw std::runtime_error("cannot open " + dir + "/scene.txt");
  SceneFrame frame = parse_frame_text(in, dir + "/scene.txt");
  frame.vehicle_obs.cloud = read_cloud_file(dir + "/cloud_vehicle.bin");
  for (size_t k = 0; k < frame.infra_poses.size(); ++k)
    frame.infra_obs[k].cloud =
        read_cloud_file(dir + "/cloud_infra_" + std::to_string(k) + ".bin");
  return frame;
}

namespace {

std::string frame_dir_name(uint32_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06u", id);
  return buf;
}

void write_ids(const std::string& path, const std::vector<uint32_t>& ids) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (uint32_t id : ids) out << id << "\n";
}

std::vector<uint32_t> read_ids(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<uint32_t> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ids.push_back(static_cast<uint32_t>(parse_long(line, path)));
  }
  return ids;
}

}  // namespace

void write_dataset(const std::string& dir, const std::vector<SceneFrame>& frames,
                   const SceneConfig& config, uint64_t seed) {
  fs::create_directories(dir);
  fs::create_directories(dir + "/frames");
  {
    std::ofstream out(dir + "/manifest.txt");
    if (!out) throw std::runtime_error("cannot write " + dir + "/manifest.txt");
    out << "format_version 1\n";
    out << "seed " << seed << "\n";
    out << "frames " << frames.size() << "\n";
    out << "layout " << config.layout << "\n";
    out << "infrastructures " << config.infrastructures << "\n";
    out << "tau " << config.detect_tau << "\n";
    out << "noise_scale " << fmt_double(config.noise_scale) << "\n";
  }
  const DatasetSplits splits = split_frames(static_cast<int>(frames.size()), seed);
  write_ids(dir + "/train.txt", splits.train);
  write_ids(dir + "/val.txt", splits.val);
  write_ids(dir + "/test.txt", splits.test);
  for (const auto& frame : frames)
    write_frame_dir(dir + "/frames/" + frame_dir_name(frame.frame_id), frame);
}

const SceneFrame& Dataset::frame_by_id(uint32_t id) const {
  for (const auto& f : frames)
    if (f.frame_id == id) return f;
  throw std::out_of_range("no frame with id " + std::to_string(id));
}

std::vector<const SceneFrame*> Dataset::select(const std::vector<uint32_t>& ids) const {
  std::vector<const SceneFrame*> out;
  out.reserve(ids.size());
  for (uint32_t id : ids) out.push_back(&frame_by_id(id));
  return out;
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  {
    std::ifstream in(dir + "/manifest.txt");
    if (!in) throw std::runtime_error("not a dataset directory (no manifest): " + dir);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "seed") ls >> ds.seed;
      else if (key == "layout") ls >> ds.layout;
    }
  }
  ds.splits.train = read_ids(dir + "/train.txt");
  ds.splits.val = read_ids(dir + "/val.txt");
  ds.splits.test = read_ids(dir + "/test.txt");

  std::vector<std::string> frame_dirs;
  const std::string frames_root = dir + "/frames";
  if (!fs::is_directory(frames_root))
    throw std::runtime_error("dataset has no frames directory: " + frames_root);
  for (const auto& entry : fs::directory_iterator(frames_root))
    if (entry.is_directory()) frame_dirs.push_back(entry.path().string());
  std::sort(frame_dirs.begin(), frame_dirs.end());
  if (frame_dirs.empty()) throw std::runtime_error("dataset holds no frames: " + dir);
  ds.frames.reserve(frame_dirs.size());
  for (const auto& fd : frame_dirs) ds.frames.push_back(read_frame_dir(fd));
  std::sort(ds.frames.begin(), ds.frames.end(),
            [](const SceneFrame& a, const SceneFrame& b) {
              return a.frame_id < b.frame_id;
            });
  return ds;
}

}  // namespace coopdet
