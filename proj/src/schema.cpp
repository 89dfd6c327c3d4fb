#include "toolweave/schema.hpp"

namespace toolweave {

SchemaType SchemaType::string_() { return SchemaType{Kind::String, {}, nullptr, nullptr}; }
SchemaType SchemaType::integer() { return SchemaType{Kind::Integer, {}, nullptr, nullptr}; }
SchemaType SchemaType::boolean() { return SchemaType{Kind::Boolean, {}, nullptr, nullptr}; }

SchemaType SchemaType::enumeration(std::vector<std::string> values) {
    SchemaType t;
    t.kind = Kind::Enum;
    t.enum_values = std::move(values);
    return t;
}

SchemaType SchemaType::list_of(SchemaType element) {
    SchemaType t;
    t.kind = Kind::List;
    t.element = std::make_shared<SchemaType>(std::move(element));
    return t;
}

SchemaType SchemaType::optional_of(SchemaType element) {
    SchemaType t;
    t.kind = Kind::Optional;
    t.element = std::make_shared<SchemaType>(std::move(element));
    return t;
}

SchemaType SchemaType::nested(StructuredSchema schema) {
    SchemaType t;
    t.kind = Kind::Nested;
    t.object = std::make_shared<StructuredSchema>(std::move(schema));
    return t;
}

namespace {

void validate_type(const SchemaType& type, const Json& value, const std::string& path,
                   std::vector<std::string>& errors);

void validate_object(const StructuredSchema& schema, const Json& value, const std::string& path,
                     std::vector<std::string>& errors) {
    if (!value.is_object()) {
        errors.push_back(path + ": expected object");
        return;
    }
    for (const auto& field : schema.fields) {
        std::string fpath = path.empty() ? field.name : path + "." + field.name;
        if (!value.contains(field.name) || value.at(field.name).is_null()) {
            if (field.type.kind != SchemaType::Kind::Optional) {
                errors.push_back(fpath + ": missing required field");
            }
            continue;
        }
        validate_type(field.type, value.at(field.name), fpath, errors);
    }
}

void validate_type(const SchemaType& type, const Json& value, const std::string& path,
                   std::vector<std::string>& errors) {
    using Kind = SchemaType::Kind;
    switch (type.kind) {
        case Kind::String:
            if (!value.is_string()) errors.push_back(path + ": expected string");
            break;
        case Kind::Integer:
            if (!value.is_number_integer() && !(value.is_number_float() &&
                                                value.get<double>() == static_cast<int64_t>(value.get<double>()))) {
                errors.push_back(path + ": expected integer");
            }
            break;
        case Kind::Boolean:
            if (!value.is_boolean()) errors.push_back(path + ": expected boolean");
            break;
        case Kind::Enum: {
            if (!value.is_string()) {
                errors.push_back(path + ": expected enum string");
                break;
            }
            auto s = value.get<std::string>();
            bool found = false;
            for (const auto& v : type.enum_values) found = found || v == s;
            if (!found) errors.push_back(path + ": '" + s + "' not in enum");
            break;
        }
        case Kind::List: {
            if (!value.is_array()) {
                errors.push_back(path + ": expected array");
                break;
            }
            for (size_t i = 0; i < value.size(); ++i) {
                validate_type(*type.element, value[i], path + "[" + std::to_string(i) + "]", errors);
            }
            break;
        }
        case Kind::Optional:
            if (!value.is_null()) validate_type(*type.element, value, path, errors);
            break;
        case Kind::Nested:
            validate_object(*type.object, value, path, errors);
            break;
    }
}

Json type_to_json_schema(const SchemaType& type) {
    using Kind = SchemaType::Kind;
    switch (type.kind) {
        case Kind::String: return Json{{"type", "string"}};
        case Kind::Integer: return Json{{"type", "integer"}};
        case Kind::Boolean: return Json{{"type", "boolean"}};
        case Kind::Enum: return Json{{"type", "string"}, {"enum", type.enum_values}};
        case Kind::List: return Json{{"type", "array"}, {"items", type_to_json_schema(*type.element)}};
        case Kind::Optional: {
            Json inner = type_to_json_schema(*type.element);
            inner["nullable"] = true;
            return inner;
        }
        case Kind::Nested: return schema_to_json_schema(*type.object);
    }
    return Json{{"type", "string"}};
}

}  // namespace

std::vector<std::string> schema_validate(const StructuredSchema& schema, const Json& value) {
    std::vector<std::string> errors;
    validate_object(schema, value, "", errors);
    return errors;
}

Json schema_to_json_schema(const StructuredSchema& schema) {
    Json props = Json::object();
    std::vector<std::string> required;
    for (const auto& field : schema.fields) {
        props[field.name] = type_to_json_schema(field.type);
        if (field.type.kind != SchemaType::Kind::Optional) required.push_back(field.name);
    }
    return Json{{"type", "object"}, {"properties", props}, {"required", required}};
}

std::string schema_instructions(const StructuredSchema& schema) {
    return "Reply with ONLY a JSON object named '" + schema.name +
           "' matching this JSON schema, no prose:\n" + schema_to_json_schema(schema).dump(2);
}

}  // namespace toolweave
