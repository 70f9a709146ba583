#pragma once

namespace voxmem::mesh {

// Case tables for the 256 corner sign patterns. kEdgeTable flags which of
// the 12 cell edges carry a crossing; kTriTable lists the edge triples of
// the emitted triangles, terminated by -1.
extern const int kEdgeTable[256];
extern const signed char kTriTable[256][16];

}  // namespace voxmem::mesh
