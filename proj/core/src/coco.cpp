#include "herdpipe/coco.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace herdpipe {

using nlohmann::json;

void CocoDocument::validate() const {
    std::set<std::int64_t> image_ids;
    for (const auto& img : images) {
        if (!image_ids.insert(img.id).second) {
            throw ValidationError("coco: duplicate image id " + std::to_string(img.id));
        }
        if (img.width <= 0 || img.height <= 0) {
            throw ValidationError("coco: image " + std::to_string(img.id) +
                                  " has non-positive dimensions");
        }
    }
    std::set<int> category_ids;
    for (const auto& cat : categories) {
        if (!category_ids.insert(cat.id).second) {
            throw ValidationError("coco: duplicate category id " + std::to_string(cat.id));
        }
    }
    std::set<std::int64_t> annotation_ids;
    for (const auto& ann : annotations) {
        if (!annotation_ids.insert(ann.id).second) {
            throw ValidationError("coco: duplicate annotation id " + std::to_string(ann.id));
        }
        if (!image_ids.count(ann.image_id)) {
            throw ValidationError("coco: annotation " + std::to_string(ann.id) +
                                  " references unknown image " + std::to_string(ann.image_id));
        }
        if (!category_ids.count(ann.category_id)) {
            throw ValidationError("coco: annotation " + std::to_string(ann.id) +
                                  " references unknown category " +
                                  std::to_string(ann.category_id));
        }
        const auto& [x, y, w, h] = ann.bbox;
        if (!(w > 0.0) || !(h > 0.0)) {
            throw ValidationError("coco: annotation " + std::to_string(ann.id) +
                                  " has non-positive box size");
        }
        const auto img = std::find_if(images.begin(), images.end(),
                                      [&](const CocoImage& i) { return i.id == ann.image_id; });
        if (x < 0.0 || y < 0.0 || x + w > img->width || y + h > img->height) {
            throw ValidationError("coco: annotation " + std::to_string(ann.id) +
                                  " box extends outside image bounds");
        }
    }
}

namespace {

json doc_to_json(const CocoDocument& doc) {
    json j;
    j["images"] = json::array();
    for (const auto& img : doc.images) {
        j["images"].push_back({{"id", img.id},
                               {"file_name", img.file_name},
                               {"width", img.width},
                               {"height", img.height}});
    }
    j["annotations"] = json::array();
    for (const auto& ann : doc.annotations) {
        j["annotations"].push_back({{"id", ann.id},
                                    {"image_id", ann.image_id},
                                    {"category_id", ann.category_id},
                                    {"bbox", ann.bbox},
                                    {"area", ann.area},
                                    {"iscrowd", ann.iscrowd}});
    }
    j["categories"] = json::array();
    for (const auto& cat : doc.categories) {
        j["categories"].push_back({{"id", cat.id}, {"name", cat.name}});
    }
    return j;
}

CocoDocument doc_from_json(const json& j) {
    CocoDocument doc;
    try {
        for (const auto& ji : j.at("images")) {
            CocoImage img;
            img.id = ji.at("id").get<std::int64_t>();
            img.file_name = ji.at("file_name").get<std::string>();
            img.width = ji.at("width").get<int>();
            img.height = ji.at("height").get<int>();
            doc.images.push_back(std::move(img));
        }
        for (const auto& ja : j.at("annotations")) {
            CocoAnnotation ann;
            ann.id = ja.at("id").get<std::int64_t>();
            ann.image_id = ja.at("image_id").get<std::int64_t>();
            ann.category_id = ja.at("category_id").get<int>();
            const auto& box = ja.at("bbox");
            if (!box.is_array() || box.size() != 4) {
                throw ValidationError("coco: bbox must be [x, y, w, h]");
            }
            for (std::size_t k = 0; k < 4; ++k) ann.bbox[k] = box[k].get<double>();
            ann.area = ja.value("area", ann.bbox[2] * ann.bbox[3]);
            ann.iscrowd = ja.value("iscrowd", 0);
            doc.annotations.push_back(ann);
        }
        for (const auto& jc : j.at("categories")) {
            CocoCategory cat;
            cat.id = jc.at("id").get<int>();
            cat.name = jc.at("name").get<std::string>();
            doc.categories.push_back(std::move(cat));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("coco: malformed document: ") + e.what());
    }
    return doc;
}

}  // namespace

std::string coco_to_json(const CocoDocument& doc) {
    return doc_to_json(doc).dump(2);
}

CocoDocument coco_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("coco: invalid json: ") + e.what());
    }
    return doc_from_json(j);
}

CocoDocument read_coco_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return coco_from_json(buf.str());
}

void write_coco_file(const std::filesystem::path& path, const CocoDocument& doc) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << coco_to_json(doc) << '\n';
}

}  // namespace herdpipe
