from pathlib import Path

import pytest

from bibharvest import mockcat

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

RECORD_TITLE = (
    'El "profundo Isaac" ;documentos inéditos del archivo de Isaac Peral y Caballero '
    ";recopilación de hechos y documentos efectuada por su hijo Antonio ;"
)
RECORD_VALUES = {
    "title": RECORD_TITLE,
    "placeOfPublication": "Madrid",
    "publisher": "Castro",
    "publicationDate": "1934",
    "physicalDescription": "334 p.",
    "otherPhysicalCharacteristics": "lám.",
    "dimensions": "22 cm",
    "signature": "3/95043",
    "location": "Salón General",
    "headquarters": "Sede de Recoletos",
}


@pytest.fixture
def record_html() -> str:
    return (FIXTURES / "bimo0001291967.html").read_text(encoding="utf-8")


@pytest.fixture
def mock_catalogue():
    """Factory: ``mock_catalogue(scenario) -> (server, manifest)``; servers stop at teardown."""
    servers = []

    def start(scenario):
        pages, manifest = mockcat.generate_pages(scenario)
        server = mockcat.serve(pages, scenario)
        servers.append(server)
        return server, manifest

    yield start
    for server in servers:
        server.shutdown()
