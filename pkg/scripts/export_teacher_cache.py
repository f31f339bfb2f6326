"""
Export a real vision-language teacher to a vl-distill feature cache
Encodes the images of train / id_eval / ood_eval manifests and the label texts of the
requested prompt styles with an open_clip model (optional dependency)
"""

import argparse
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import torch
from tqdm import tqdm

from src.core.embedding import FeatureKind, FeatureMatrix, normalize
from src.data.manifest import read_manifest
from src.data.splits import Sample
from src.enrichment.descriptions import DescriptionCache, build_label_texts
from src.enrichment.prompts import PromptStyle
from src.enrichment.tokenizer import default_token_counter
from src.teacher.providers import TeacherProvider, export_teacher_cache
from src.utils.logger import get_logger

logger = get_logger(__name__)

SPLIT_FILES = ("train.tsv", "id_eval.tsv", "ood_eval.tsv")


class OpenClipTeacher(TeacherProvider):
    """open_clip image and text towers over manifest samples"""

    def __init__(self, model_name: str, pretrained: str, samples: Sequence[Sample], image_root: str = ".",
                 batch_size: int = 64, device: str = "cpu"):
        import open_clip
        from PIL import Image

        self._image_cls = Image
        self.model, _, self.preprocess = open_clip.create_model_and_transforms(model_name, pretrained=pretrained)
        self.tokenizer = open_clip.get_tokenizer(model_name)
        self.model.eval().to(device)
        self.device = device
        self.batch_size = batch_size
        self.image_root = Path(image_root)
        self.samples: Dict[str, Sample] = {s.sample_id: s for s in samples}
        self.generator_id = f"open_clip:{model_name}:{pretrained}"

    @property
    def embed_dim(self) -> int:
        return int(self.model.text_projection.shape[1])

    def _image(self, sample_id: str) -> torch.Tensor:
        path = self.image_root / self.samples[sample_id].image_ref
        return self.preprocess(self._image_cls.open(path).convert("RGB"))

    @torch.no_grad()
    def image_features(self, sample_ids: Sequence[str]) -> FeatureMatrix:
        rows: List[np.ndarray] = []
        for start in tqdm(range(0, len(sample_ids), self.batch_size), desc="images"):
            batch = torch.stack([self._image(sid) for sid in sample_ids[start:start + self.batch_size]])
            rows.append(self.model.encode_image(batch.to(self.device)).float().cpu().numpy())
        return normalize(FeatureMatrix(np.concatenate(rows).astype(np.float64), tuple(sample_ids),
                                       FeatureKind.TEACHER_VISUAL))

    @torch.no_grad()
    def text_features(self, texts: Sequence[str]) -> FeatureMatrix:
        rows: List[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            tokens = self.tokenizer(list(texts[start:start + self.batch_size])).to(self.device)
            rows.append(self.model.encode_text(tokens).float().cpu().numpy())
        return normalize(FeatureMatrix(np.concatenate(rows).astype(np.float64), tuple(texts), FeatureKind.TEXT))


def main():
    parser = argparse.ArgumentParser(description="Export open_clip teacher features")
    parser.add_argument("--manifests", required=True, help="Directory with train.tsv, id_eval.tsv, ood_eval.tsv")
    parser.add_argument("--image-root", default=".")
    parser.add_argument("--model", default="ViT-L-14")
    parser.add_argument("--pretrained", default="openai")
    parser.add_argument("--styles", nargs="+", default=["plain"], choices=[s.value for s in PromptStyle])
    parser.add_argument("--description-cache", help="Descriptions for enriched styles")
    parser.add_argument("--out", required=True, help="Output cache directory")
    parser.add_argument("--device", default="cuda" if torch.cuda.is_available() else "cpu")
    args = parser.parse_args()

    samples = [s for name in SPLIT_FILES for s in read_manifest(str(Path(args.manifests) / name))]
    labels = list(dict.fromkeys(s.label for s in samples))
    cache = DescriptionCache(args.description_cache) if args.description_cache else None
    counter = default_token_counter()
    logger.info(f"Fitting label texts with the {counter.name} token counter")
    texts = [text for style in args.styles
             for text in build_label_texts(labels, PromptStyle(style), cache, counter=counter).values()]

    teacher = OpenClipTeacher(args.model, args.pretrained, samples, args.image_root, device=args.device)
    export_teacher_cache(teacher, [s.sample_id for s in samples], texts, args.out,
                         meta={"model": args.model, "pretrained": args.pretrained})
    print(f"Exported {len(samples)} images and {len(set(texts))} texts to {args.out}")


if __name__ == "__main__":
    main()
