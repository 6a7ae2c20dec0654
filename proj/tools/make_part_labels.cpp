// Regenerates data/body_part_labels.json from the procedural body model.
#include <iostream>

#include "tryon/body_model.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_part_labels <out.json>\n";
    return 2;
  }
  const auto table = tryon::PartLabelTable::from_model(tryon::BodyModel::standard());
  table.save(argv[1]);
  std::cout << table.vertex_part.size() << " vertices, checksum " << table.checksum << "\n";
  return 0;
}
