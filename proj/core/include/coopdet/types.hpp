#pragma once

#include <stdexcept>
#include <string>

namespace coopdet {

enum class ObjectClass { Car, Truck, Pedestrian };

inline const char* class_name(ObjectClass c) {
  switch (c) {
    case ObjectClass::Car: return "car";
    case ObjectClass::Truck: return "truck";
    case ObjectClass::Pedestrian: return "pedestrian";
  }
  return "?";
}

inline ObjectClass parse_class(const std::string& s) {
  if (s == "car") return ObjectClass::Car;
  if (s == "truck") return ObjectClass::Truck;
  if (s == "pedestrian") return ObjectClass::Pedestrian;
  throw std::invalid_argument("unknown object class: " + s);
}

}  // namespace coopdet
