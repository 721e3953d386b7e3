"""Regenerate the bundled corpus JSONL assets.

Schemas and queries are authored here by hand; this script only resolves
foreign-key column ids and dumps the JSONL files the package bundles.
Run from the repo root:  python3 scripts/build_corpus.py
"""

import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))
ASSETS = os.path.join(HERE, "..", "src", "gnnsql", "assets")


def schema(db_id, tables, fks):
    """tables: [(name, [(col, type, pk), ...])], fks: [("t.c", "t.c"), ...]"""
    col_ids = {}
    next_id = 0
    tdocs = []
    for tname, cols in tables:
        cdocs = []
        for cname, vtype, pk in cols:
            col_ids[f"{tname}.{cname}"] = next_id
            next_id += 1
            cdocs.append({"name": cname, "value_type": vtype, "is_primary": pk})
        tdocs.append({"name": tname, "columns": cdocs})
    return {
        "db_id": db_id,
        "tables": tdocs,
        "foreign_keys": [[col_ids[a], col_ids[b]] for a, b in fks],
    }


N, T, TM = "number", "text", "time"

SCHEMAS = [
    schema("soccer", [
        ("team", [("team_id", N, True), ("name", T, False), ("location", T, False)]),
        ("match_season", [("season", N, True), ("team", N, False), ("position", T, False)]),
    ], [("match_season.team", "team.team_id")]),
    schema("pets", [
        ("student", [("student_id", N, True), ("last_name", T, False),
                     ("first_name", T, False), ("age", N, False), ("sex", T, False),
                     ("major", T, False), ("advisor", N, False), ("city_code", T, False)]),
        ("has_pet", [("student_id", N, False), ("pet_id", N, False)]),
        ("pets", [("pet_id", N, True), ("pet_type", T, False), ("pet_age", N, False),
                  ("weight", N, False)]),
    ], [("has_pet.student_id", "student.student_id"), ("has_pet.pet_id", "pets.pet_id")]),
    schema("poker", [
        ("poker_player", [("poker_player_id", N, True), ("people_id", N, False),
                          ("final_table_made", N, False), ("best_finish", N, False),
                          ("money_rank", N, False), ("earnings", N, False)]),
        ("people", [("people_id", N, True), ("nationality", T, False), ("name", T, False),
                    ("birth_date", TM, False), ("height", N, False)]),
    ], [("poker_player.people_id", "people.people_id")]),
    schema("flights", [
        ("airlines", [("airline_id", N, True), ("airline_name", T, False),
                      ("abbreviation", T, False), ("country", T, False)]),
        ("airports", [("city", T, False), ("airport_code", T, True),
                      ("airport_name", T, False), ("country", T, False),
                      ("country_abbrev", T, False)]),
        ("flights", [("airline", N, False), ("flight_number", N, False),
                     ("source_airport", T, False), ("dest_airport", T, False)]),
    ], [("flights.airline", "airlines.airline_id"),
        ("flights.source_airport", "airports.airport_code"),
        ("flights.dest_airport", "airports.airport_code")]),
    schema("tv", [
        ("tv_channel", [("id", N, True), ("series_name", T, False), ("country", T, False),
                        ("language", T, False), ("content", T, False),
                        ("pixel_aspect_ratio", T, False), ("package_option", T, False)]),
        ("tv_series", [("id", N, True), ("episode", T, False), ("air_date", TM, False),
                       ("rating", N, False), ("share", N, False),
                       ("weekly_rank", N, False), ("channel", N, False)]),
        ("cartoon", [("id", N, True), ("title", T, False), ("directed_by", T, False),
                     ("written_by", T, False), ("original_air_date", TM, False),
                     ("production_code", N, False), ("channel", N, False)]),
    ], [("tv_series.channel", "tv_channel.id"), ("cartoon.channel", "tv_channel.id")]),
    schema("dogs", [
        ("breeds", [("breed_code", T, True), ("breed_name", T, False)]),
        ("sizes", [("size_code", T, True), ("size_description", T, False)]),
        ("owners", [("owner_id", N, True), ("first_name", T, False), ("last_name", T, False),
                    ("street", T, False), ("city", T, False), ("state", T, False),
                    ("zip_code", T, False)]),
        ("dogs", [("dog_id", N, True), ("owner_id", N, False), ("breed_code", T, False),
                  ("size_code", T, False), ("name", T, False), ("age", N, False),
                  ("gender", T, False), ("weight", N, False)]),
    ], [("dogs.owner_id", "owners.owner_id"), ("dogs.breed_code", "breeds.breed_code"),
        ("dogs.size_code", "sizes.size_code")]),
    schema("cars", [
        ("continents", [("cont_id", N, True), ("continent", T, False)]),
        ("countries", [("country_id", N, True), ("country_name", T, False),
                       ("continent", N, False)]),
        ("car_makers", [("id", N, True), ("maker", T, False), ("full_name", T, False),
                        ("country", N, False)]),
        ("model_list", [("model_id", N, True), ("maker", N, False), ("model", T, False)]),
        ("car_names", [("make_id", N, True), ("model", T, False), ("make", T, False)]),
        ("cars_data", [("id", N, False), ("mpg", N, False), ("cylinders", N, False),
                       ("edispl", N, False), ("horsepower", N, False), ("weight", N, False),
                       ("accelerate", N, False), ("year", N, False)]),
    ], [("countries.continent", "continents.cont_id"),
        ("car_makers.country", "countries.country_id"),
        ("model_list.maker", "car_makers.id"),
        ("cars_data.id", "car_names.make_id")]),
    schema("university", [
        ("student", [("student_id", N, True), ("name", T, False), ("age", N, False)]),
        ("student_semester", [("student_id", N, False), ("semester_id", N, False),
                              ("program_id", N, False)]),
        ("semester", [("semester_id", N, True), ("semester_name", T, False),
                      ("year", N, False)]),
        ("program", [("program_id", N, True), ("name", T, False), ("degree", T, False)]),
    ], [("student_semester.student_id", "student.student_id"),
        ("student_semester.semester_id", "semester.semester_id"),
        ("student_semester.program_id", "program.program_id")]),
]

QUERIES = [
    # soccer
    ("soccer", "SELECT name FROM team"),
    ("soccer", "SELECT team.name FROM team WHERE team.team_id NOT IN "
               "( SELECT match_season.team FROM match_season )"),
    ("soccer", "SELECT count ( * ) FROM team"),
    ("soccer", "SELECT match_season.position FROM match_season JOIN team "
               "ON match_season.team = team.team_id WHERE team.name = 'value'"),
    ("soccer", "SELECT team.name FROM team WHERE team.team_id IN ( SELECT match_season.team "
               "FROM match_season WHERE match_season.position = 'value' )"),
    ("soccer", "SELECT DISTINCT match_season.position FROM match_season"),
    # pets
    ("pets", "SELECT student.age FROM student WHERE student.student_id NOT IN "
             "( SELECT has_pet.student_id FROM has_pet JOIN pets ON has_pet.pet_id = "
             "pets.pet_id WHERE pets.pet_type = 'cat' )"),
    ("pets", "SELECT pets.pet_type , pets.weight FROM pets ORDER BY pets.pet_age ASC LIMIT 1"),
    ("pets", "SELECT count ( * ) FROM pets WHERE pets.weight >= 10"),
    ("pets", "SELECT student.first_name , student.age FROM student JOIN has_pet "
             "ON student.student_id = has_pet.student_id"),
    ("pets", "SELECT avg ( pets.pet_age ) FROM pets"),
    ("pets", "SELECT student.major , count ( * ) FROM student GROUP BY student.major"),
    ("pets", "SELECT student.major FROM student GROUP BY student.major "
             "HAVING count ( * ) > 5"),
    ("pets", "SELECT student.first_name FROM student WHERE student.age > 20 "
             "AND student.sex = 'F'"),
    ("pets", "SELECT pets.pet_type , max ( pets.weight ) FROM pets GROUP BY pets.pet_type"),
    ("pets", "SELECT student.first_name FROM student WHERE student.age < 18 "
             "OR student.age > 60"),
    ("pets", "SELECT pets.pet_id FROM pets WHERE pets.pet_age <= 'value'"),
    # poker
    ("poker", "SELECT people.name FROM poker_player JOIN people ON poker_player.people_id "
              "= people.people_id ORDER BY poker_player.final_table_made ASC"),
    ("poker", "SELECT poker_player.earnings FROM poker_player "
              "ORDER BY poker_player.earnings DESC"),
    ("poker", "SELECT people.name FROM people WHERE people.people_id IN "
              "( SELECT poker_player.people_id FROM poker_player "
              "WHERE poker_player.earnings > 'value' )"),
    ("poker", "SELECT count ( DISTINCT people.nationality ) FROM people"),
    ("poker", "SELECT sum ( poker_player.earnings ) FROM poker_player"),
    ("poker", "SELECT people.name , people.height FROM people "
              "ORDER BY people.height DESC LIMIT 1"),
    ("poker", "SELECT avg ( poker_player.earnings ) FROM poker_player "
              "WHERE poker_player.final_table_made > 'value'"),
    # flights
    ("flights", "SELECT airports.city FROM airports JOIN flights ON airports.airport_code "
                "= flights.dest_airport GROUP BY airports.city "
                "ORDER BY count ( * ) DESC LIMIT 1"),
    ("flights", "SELECT airports.airport_name FROM airports WHERE airports.city = 'value'"),
    ("flights", "SELECT count ( * ) FROM flights JOIN airlines ON flights.airline = "
                "airlines.airline_id WHERE airlines.airline_name = 'value'"),
    ("flights", "SELECT airlines.airline_name FROM airlines WHERE airlines.airline_id "
                "NOT IN ( SELECT flights.airline FROM flights )"),
    ("flights", "SELECT flights.flight_number FROM flights JOIN airports ON "
                "flights.source_airport = airports.airport_code "
                "WHERE airports.city = 'value'"),
    ("flights", "SELECT airlines.country FROM airlines UNION SELECT airports.country "
                "FROM airports"),
    ("flights", "SELECT flights.airline , count ( * ) FROM flights GROUP BY flights.airline"),
    # tv
    ("tv", "SELECT tv_channel.language , count ( * ) FROM tv_channel GROUP BY "
           "tv_channel.language ORDER BY count ( * ) ASC LIMIT 1"),
    ("tv", "SELECT count ( DISTINCT tv_channel.series_name ) FROM tv_channel"),
    ("tv", "SELECT tv_series.episode FROM tv_series ORDER BY tv_series.rating DESC"),
    ("tv", "SELECT cartoon.title FROM cartoon JOIN tv_channel ON cartoon.channel = "
           "tv_channel.id WHERE tv_channel.language = 'value'"),
    ("tv", "SELECT tv_channel.series_name FROM tv_channel WHERE tv_channel.id NOT IN "
           "( SELECT cartoon.channel FROM cartoon )"),
    ("tv", "SELECT tv_series.air_date FROM tv_series WHERE tv_series.rating > 'value' "
           "AND tv_series.share > 'value'"),
    ("tv", "SELECT tv_channel.country FROM tv_channel GROUP BY tv_channel.country "
           "HAVING count ( * ) > 'value'"),
    ("tv", "SELECT cartoon.title FROM cartoon WHERE cartoon.written_by = 'value' "
           "INTERSECT SELECT cartoon.title FROM cartoon WHERE cartoon.directed_by = 'value'"),
    ("tv", "SELECT tv_series.episode FROM tv_series WHERE tv_series.weekly_rank != 'value'"),
    # dogs
    ("dogs", "SELECT owners.first_name , owners.last_name , dogs.size_code FROM dogs "
             "JOIN owners ON dogs.owner_id = owners.owner_id"),
    ("dogs", "SELECT dogs.name FROM dogs JOIN breeds ON dogs.breed_code = breeds.breed_code "
             "WHERE breeds.breed_name = 'value'"),
    ("dogs", "SELECT count ( * ) FROM dogs JOIN sizes ON dogs.size_code = sizes.size_code "
             "WHERE sizes.size_description = 'value'"),
    ("dogs", "SELECT owners.first_name FROM owners WHERE owners.owner_id NOT IN "
             "( SELECT dogs.owner_id FROM dogs )"),
    ("dogs", "SELECT dogs.name , dogs.age FROM dogs ORDER BY dogs.age ASC LIMIT 3"),
    ("dogs", "SELECT owners.city , count ( * ) FROM owners GROUP BY owners.city "
             "ORDER BY count ( * ) DESC"),
    ("dogs", "SELECT dogs.breed_code , avg ( dogs.weight ) FROM dogs "
             "GROUP BY dogs.breed_code"),
    ("dogs", "SELECT owners.state FROM owners EXCEPT SELECT owners.state FROM owners "
             "JOIN dogs ON owners.owner_id = dogs.owner_id"),
    # cars
    ("cars", "SELECT count ( * ) FROM cars_data WHERE cars_data.cylinders > 'value'"),
    ("cars", "SELECT car_names.make FROM car_names JOIN cars_data ON cars_data.id = "
             "car_names.make_id WHERE cars_data.year > 'value'"),
    ("cars", "SELECT countries.country_name FROM countries JOIN continents ON "
             "countries.continent = continents.cont_id WHERE continents.continent = 'value'"),
    ("cars", "SELECT car_makers.maker , count ( * ) FROM car_makers JOIN model_list ON "
             "model_list.maker = car_makers.id GROUP BY car_makers.maker"),
    ("cars", "SELECT min ( cars_data.mpg ) FROM cars_data"),
    ("cars", "SELECT cars_data.year , avg ( cars_data.horsepower ) FROM cars_data GROUP BY "
             "cars_data.year HAVING avg ( cars_data.weight ) < 'value'"),
    ("cars", "SELECT model_list.model FROM model_list WHERE model_list.maker IN "
             "( SELECT car_makers.id FROM car_makers WHERE car_makers.country = 'value' )"),
    # university
    ("university", "SELECT student.name FROM student JOIN student_semester ON "
                   "student.student_id = student_semester.student_id JOIN semester ON "
                   "student_semester.semester_id = semester.semester_id "
                   "WHERE semester.year = 'value'"),
    ("university", "SELECT program.name FROM program JOIN student_semester ON "
                   "program.program_id = student_semester.program_id GROUP BY program.name "
                   "ORDER BY count ( * ) DESC LIMIT 1"),
    ("university", "SELECT semester.semester_name FROM semester WHERE semester.semester_id "
                   "NOT IN ( SELECT student_semester.semester_id FROM student_semester )"),
    ("university", "SELECT count ( DISTINCT student_semester.student_id ) "
                   "FROM student_semester"),
    ("university", "SELECT student.name , student.age FROM student "
                   "ORDER BY student.age DESC LIMIT 1"),
]

# Raw queries with aliases/bare columns plus their expected canonical form.
ALIAS_CORPUS = [
    ("soccer",
     "SELECT T1.name FROM team AS T1",
     "SELECT team.name FROM team"),
    ("pets",
     "SELECT age FROM student",
     "SELECT student.age FROM student"),
    ("poker",
     "SELECT T2.name FROM poker_player AS T1 JOIN people AS T2 "
     "ON T1.people_id = T2.people_id ORDER BY T1.final_table_made ASC",
     "SELECT people.name FROM poker_player JOIN people "
     "ON poker_player.people_id = people.people_id "
     "ORDER BY poker_player.final_table_made ASC"),
    ("flights",
     "SELECT T1.city FROM airports AS T1 JOIN flights AS T2 "
     "ON T1.airport_code = T2.dest_airport GROUP BY T1.city "
     "ORDER BY count (*) DESC LIMIT 1",
     "SELECT airports.city FROM airports JOIN flights "
     "ON airports.airport_code = flights.dest_airport GROUP BY airports.city "
     "ORDER BY COUNT ( * ) DESC LIMIT 'value'"),
    ("cars",
     "SELECT count (*) FROM cars_data WHERE cylinders > 4",
     "SELECT COUNT ( * ) FROM cars_data WHERE cars_data.cylinders > 'value'"),
    ("dogs",
     "select first_name , last_name from owners order by zip_code",
     "SELECT owners.first_name , owners.last_name FROM owners "
     "ORDER BY owners.zip_code ASC"),
    ("university",
     "SELECT name FROM student WHERE age > 20",
     "SELECT student.name FROM student WHERE student.age > 'value'"),
    ("tv",
     'SELECT T1.title FROM cartoon AS T1 JOIN tv_channel AS T2 ON T1.channel = T2.id '
     'WHERE T2.language = "English"',
     "SELECT cartoon.title FROM cartoon JOIN tv_channel ON cartoon.channel = tv_channel.id "
     "WHERE tv_channel.language = 'value'"),
    ("pets",
     "SELECT weight FROM pets ORDER BY pet_age LIMIT 1",
     "SELECT pets.weight FROM pets ORDER BY pets.pet_age ASC LIMIT 'value'"),
    ("soccer",
     "SELECT name FROM team WHERE team_id NOT IN (SELECT team FROM match_season)",
     "SELECT team.name FROM team WHERE team.team_id NOT IN "
     "( SELECT match_season.team FROM match_season )"),
    ("poker",
     "SELECT T1.nationality , count ( * ) FROM people AS T1 GROUP BY T1.nationality "
     "HAVING count ( * ) >= 2",
     "SELECT people.nationality , COUNT ( * ) FROM people GROUP BY people.nationality "
     "HAVING COUNT ( * ) >= 'value'"),
    ("flights",
     "SELECT country FROM airlines UNION SELECT country FROM airports",
     "SELECT airlines.country FROM airlines UNION SELECT airports.country FROM airports"),
]


def main():
    os.makedirs(ASSETS, exist_ok=True)
    with open(os.path.join(ASSETS, "corpus_schemas.jsonl"), "w", encoding="utf-8") as f:
        for s in SCHEMAS:
            f.write(json.dumps(s, sort_keys=True) + "\n")
    with open(os.path.join(ASSETS, "corpus_queries.jsonl"), "w", encoding="utf-8") as f:
        for db_id, sql in QUERIES:
            f.write(json.dumps({"db_id": db_id, "sql": sql}, sort_keys=True) + "\n")
    with open(os.path.join(ASSETS, "alias_corpus.jsonl"), "w", encoding="utf-8") as f:
        for db_id, raw, canonical in ALIAS_CORPUS:
            f.write(json.dumps({"db_id": db_id, "raw": raw, "canonical": canonical},
                               sort_keys=True) + "\n")
    print(f"wrote {len(SCHEMAS)} schemas, {len(QUERIES)} queries, "
          f"{len(ALIAS_CORPUS)} alias pairs")


if __name__ == "__main__":
    main()
