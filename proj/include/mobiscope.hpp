#pragma once

#include "mobiscope/analysis.hpp"
#include "mobiscope/clustering.hpp"
#include "mobiscope/config.hpp"
#include "mobiscope/demographics.hpp"
#include "mobiscope/error.hpp"
#include "mobiscope/geo.hpp"
#include "mobiscope/ingest.hpp"
#include "mobiscope/mobility.hpp"
#include "mobiscope/pipeline.hpp"
#include "mobiscope/rng.hpp"
#include "mobiscope/synth.hpp"
#include "mobiscope/text.hpp"
#include "mobiscope/time.hpp"
#include "mobiscope/trajectory.hpp"
