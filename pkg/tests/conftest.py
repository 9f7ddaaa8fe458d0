from __future__ import annotations

import io

import pytest

from logrepair.eventlog import parse_csv

# Three check-in-to-take-off journeys; trace 3 lost the labels at positions
# 1 and 3 (see AIRPORT_TRUTH for what they were).
AIRPORT_CSV = b"""\
case,activity,timestamp,resource
1,Arrive at Airport,01/09/2020 12:00:00,Tom
1,Check in,01/09/2020 12:30:00,Jack
1,Security Check,01/09/2020 13:00:00,Thomas
1,Boarding,01/09/2020 13:30:00,Linda
1,Take off,01/09/2020 14:00:00,James
2,Arrive at Airport,02/09/2020 09:00:00,Alice
2,Priority Check in,02/09/2020 09:20:00,James
2,Priority Security Check,02/09/2020 09:40:00,Lucas
2,Priority Boarding,02/09/2020 10:00:00,Linda
2,Take off,02/09/2020 10:30:00,Peter
3,Arrive at Airport,03/09/2020 15:00:00,Steven
3,-,03/09/2020 15:30:00,Jack
3,Security Check,03/09/2020 16:00:00,Mark
3,-,03/09/2020 16:30:00,Linda
3,Take off,03/09/2020 17:00:00,Ethan
"""

# ground truth for the two blanked labels of trace 3
AIRPORT_TRUTH = {("3", 1): "Check in", ("3", 3): "Boarding"}


@pytest.fixture
def airport_log():
    return parse_csv(io.BytesIO(AIRPORT_CSV))
