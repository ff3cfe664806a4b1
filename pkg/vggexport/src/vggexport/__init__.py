"""One-off converter: pretrained VGG-19 conv weights -> NNWT container."""

from vggexport.exporter import ExportError, ExportManifest, export

__all__ = ["ExportError", "ExportManifest", "export"]
