export { MAGIC, FORMAT_VERSION, Manifest, Split, manifestPath, readEmb, writeEmb } from "./embfile";
export { Image, decodeImage, encodePpm } from "./image";
export { PreprocessSpec, centerCrop, preprocess, resizeBilinear } from "./preprocess";
export { Backbone, OnnxBackbone, ReferenceBackbone, REGISTRY, backboneIds, loadBackbone, sourceTag } from "./backbones";
export { Dataset, Cifar10Dataset, Cifar100Dataset, DirectoryDataset, openDataset } from "./datasets";
export { ExtractJob, ExtractResult, extract } from "./extract";
export { Splitmix64 } from "./prng";
