#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "coopdet/scenegen.hpp"

namespace coopdet {

// On-disk layout:
//   <dir>/manifest.txt            key/value echo of how the set was made
//   <dir>/train.txt val.txt test.txt   frame ids, one per line
//   <dir>/frames/frame_NNNNNN/scene.txt
//                              cloud_vehicle.bin
//                              cloud_infra_<k>.bin
// scene.txt is line oriented: each line is a keyword followed by
// space-separated fields; doubles are printed with %.17g so they round-trip
// exactly. Sensor indices count the vehicle as 0 and responder k as k+1.

struct DatasetSplits {
  std::vector<uint32_t> train, val, test;
};

// Seeded 6:2:2 shuffle-split; each split comes back sorted ascending.
DatasetSplits split_frames(int frames, uint64_t seed);

std::string format_frame_text(const SceneFrame& frame);
SceneFrame parse_frame_text(std::istream& in, const std::string& where);

// Frame directory with scene.txt plus
// one cloud file per sensor.
void write_frame_dir(const std::string& dir, const SceneFrame& frame);
SceneFrame read_frame_dir(const std::string& dir);

void write_dataset(const std::string& dir, const std::vector<SceneFrame>& frames,
                   const SceneConfig& config, uint64_t seed);

struct Dataset {
  std::vector<SceneFrame> frames;  // ascending frame id
  DatasetSplits splits;
  uint64_t seed = 0;
  std::string layout;

  const SceneFrame& frame_by_id(uint32_t id) const;
  std::vector<const SceneFrame*> select(const std::vector<uint32_t>& ids) const;
};

Dataset load_dataset(const std::string& dir);

}  // namespace coopdet
