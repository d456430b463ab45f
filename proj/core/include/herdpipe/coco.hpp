#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "herdpipe/common.hpp"

namespace herdpipe {

/// COCO object-detection interchange document (the subset this toolkit
/// produces and consumes). bbox is [x, y, width, height] in pixels.
struct CocoImage {
    std::int64_t id = 0;
    std::string file_name;
    int width = 0;
    int height = 0;

    bool operator==(const CocoImage&) const = default;
};

struct CocoAnnotation {
    std::int64_t id = 0;
    std::int64_t image_id = 0;
    int category_id = 0;
    std::array<double, 4> bbox{};  // x, y, w, h
    double area = 0.0;
    int iscrowd = 0;

    bool operator==(const CocoAnnotation&) const = default;
};

struct CocoCategory {
    int id = 0;
    std::string name;

    bool operator==(const CocoCategory&) const = default;
};

struct CocoDocument {
    std::vector<CocoImage> images;
    std::vector<CocoAnnotation> annotations;
    std::vector<CocoCategory> categories;

    /// Checks the document invariants: unique ids, resolvable references,
    /// positive box sizes, boxes within their image bounds. Throws
    /// ValidationError on the first violation.
    void validate() const;

    bool operator==(const CocoDocument&) const = default;
};

std::string coco_to_json(const CocoDocument& doc);
CocoDocument coco_from_json(const std::string& text);

CocoDocument read_coco_file(const std::filesystem::path& path);
void write_coco_file(const std::filesystem::path& path, const CocoDocument& doc);

}  // namespace herdpipe
