import { StudyApi } from "./api.js";
import { StudyFlow } from "./flow.js";
import { raterToken } from "./token.js";
import { StudyView } from "./view.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

const api = new StudyApi("");
const token = raterToken(window.localStorage);

let view: StudyView;
const flow = new StudyFlow(api, token, (state) => view.render(state));
view = new StudyView(root, api, flow);

void flow.start();
