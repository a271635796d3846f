"""Regenerates the bundled pipeline fixture (catalog, topics, templates).

Deterministic: run from any directory, outputs land next to this script.
"""
import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
rng = random.Random(20220614)

# scene key -> (titles, products, profile, ocr lines)
SCENES = {
    "beach": (
        [("夏日海边", "清凉出行"), ("海边度假", "防晒必备")],
        ["夏日海边防晒霜", "海边沙滩裤", "夏日遮阳帽", "海边度假太阳镜", "夏日海边泳衣", "防晒冰袖"],
        {"age": "adult", "gender": "unknown", "season": "summer"},
        ["夏日必备 @ 海边防晒", "SPF50 防晒霜 高倍防护 户外 清爽 不油腻 防水防汗 适合 海边 度假 旅行 通勤 使用 全家 可用 温和 配方 敏感肌 适用"],
    ),
    "camping": (
        [("露营野餐", "户外好时光"), ("周末露营", "自在出游")],
        ["露营帐篷 双人", "野餐垫 防潮", "露营折叠椅", "户外保温箱", "露营营地灯", "野餐篮"],
        {"age": "adult", "gender": "unknown", "season": "spring"},
        ["周末露营 @ 野餐好物", "加厚 帐篷 防雨 防风 三季 通用 户外 露营 徒步 登山 搭建 简单 收纳 方便 铝合金 支架 稳固 耐用 透气 网纱"],
    ),
    "office": (
        [("居家办公", "高效桌面"), ("桌面改造", "效率加倍")],
        ["显示器支架 桌面", "人体工学椅 办公", "护眼台灯 桌面", "机械键盘 办公", "桌面鼠标垫 大号", "桌面收纳盒"],
        {"age": "adult", "gender": "unknown", "season": "unknown"},
        ["桌面改造 @ 办公好物", "人体工学 设计 腰部 支撑 久坐 不累 可调节 扶手 头枕 靠背 网布 透气 承重 稳固 静音 滑轮 办公室 家用 电竞 学习 通用"],
    ),
    "baby": (
        [("宝宝洗护", "温和呵护"), ("新生儿护理", "安心之选")],
        ["宝宝沐浴露 温和", "婴儿护臀膏", "宝宝浴盆 折叠", "婴儿口水巾", "宝宝湿巾 加厚", "婴儿洗发水"],
        {"age": "baby", "gender": "unknown", "season": "unknown"},
        ["宝宝洗护 @ 温和无泪", "婴儿 专用 配方 无泪 温和 不刺激 植物 萃取 滋润 保湿 洗发 沐浴 二合一 新生儿 可用 泡沫 细腻 易冲洗 清香 宜人 实惠 大瓶"],
    ),
    "winter": (
        [("冬季保暖", "温暖过冬"), ("寒冬出行", "暖意随身")],
        ["冬季羽绒服 加厚", "保暖围巾 羊毛", "冬季暖手宝", "保暖内衣 套装", "冬季雪地靴", "保暖手套 触屏"],
        {"age": "adult", "gender": "female", "season": "winter"},
        ["寒冬出行 @ 保暖好物", "白鸭绒 填充 蓬松 轻盈 保暖 防风 连帽 设计 时尚 百搭 多色 可选 男女 同款 宽松 版型 冬季 出行 通勤 滑雪 旅行 必备"],
    ),
    "fitness": (
        [("健身训练", "燃脂塑形"), ("居家健身", "活力满满")],
        ["健身瑜伽垫 加厚", "可调节哑铃", "健身跳绳 计数", "运动水壶 大容量", "健身弹力带", "健身护腕"],
        {"age": "adult", "gender": "unknown", "season": "unknown"},
        ["居家健身 @ 燃脂神器", "加宽 加厚 瑜伽垫 防滑 回弹 环保 材质 无异味 初学者 专业 健身 普拉提 舞蹈 垫子 可折叠 附送 绑带 背包 家用 健身房"],
    ),
    "baking": (
        [("厨房烘焙", "甜蜜时光"), ("烘焙新手", "轻松上手")],
        ["家用烤箱 烘焙", "电动打蛋器", "烘焙模具 蛋糕", "烘焙低筋面粉", "裱花袋 烘焙", "烘焙油纸"],
        {"age": "adult", "gender": "female", "season": "unknown"},
        ["烘焙新手 @ 甜蜜下午茶", "大容量 家用 多功能 电烤箱 上下 独立 控温 烘焙 蛋糕 面包 饼干 披萨 烤鸡 定时 功能 内胆 易清洁 配件 齐全 送 食谱"],
    ),
    "school": (
        [("开学季", "学习必备"), ("新学期", "文具焕新")],
        ["开学书包 减负", "学生文具盒", "开学笔记本 套装", "学生水彩笔", "开学护眼台灯", "开学钢笔 练字"],
        {"age": "child", "gender": "unknown", "season": "autumn"},
        ["新学期 @ 开学好物", "小学生 书包 减负 护脊 大容量 轻便 防水 反光 条 安全 多 隔层 收纳 男孩 女孩 一至 六年级 适用 卡通 图案 透气 背板"],
    ),
}

ATTRS = {
    "beach": [("category", "户外"), ("material", "涤纶")],
    "camping": [("category", "户外"), ("material", "牛津布")],
    "office": [("category", "办公"), ("material", "金属")],
    "baby": [("category", "母婴"), ("material", "植物")],
    "winter": [("category", "服饰"), ("material", "羊毛")],
    "fitness": [("category", "运动"), ("material", "TPE")],
    "baking": [("category", "厨具"), ("material", "不锈钢")],
    "school": [("category", "文具"), ("material", "尼龙")],
}

products, topics = [], []
n = 0
for scene, (titles, names, profile, ocr) in SCENES.items():
    for i, name in enumerate(names):
        n += 1
        pid = f"p{n:03d}"
        attrs = [{"k": k, "v": v} for k, v in ATTRS[scene]]
        products.append({
            "id": pid,
            "title": name,
            "attributes": attrs,
            "ocr_text": ocr[i % len(ocr)] if i < 2 else "",
            "profile": profile,
            "copywriting": f"{name}，{titles[0][0]}，{titles[0][1]}。品质保证",
        })
        # Two thirds of the products carry a human topic.
        if i % 3 != 2:
            a, b = titles[i % len(titles)]
            topics.append({"product_id": pid, "phrase_a": a, "phrase_b": b, "source": "human"})

# One unrelated product round the catalog up to 50.
for name in ["汽车 车载 充电器", "宠物 猫砂 除臭"]:
    n += 1
    products.append({
        "id": f"p{n:03d}", "title": name,
        "attributes": [{"k": "category", "v": "杂货"}],
        "ocr_text": "", "profile": {"age": "unknown", "gender": "unknown", "season": "unknown"},
    })
assert len(products) == 50, len(products)

templates = [
    {"pattern": "防晒", "phrase_a": "夏日海边", "phrase_b": "清凉出行"},
    {"pattern": "露营", "phrase_a": "露营野餐", "phrase_b": "户外好时光"},
    {"pattern": "宝宝", "phrase_a": "宝宝洗护", "phrase_b": "温和呵护"},
    {"pattern": "*", "phrase_a": "{category}好物", "phrase_b": "品质之选"},
]


def dump(name, rows):
    with open(HERE / name, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


dump("catalog.jsonl", products)
dump("topics.jsonl", topics)
dump("templates.jsonl", templates)
(HERE / "pipeline.conf").write_text(
    "# Pipeline fixture configuration\n"
    "seed = 7\n"
    'catalog = "catalog.jsonl"\n'
    'topics = "topics.jsonl"\n'
    'templates = "templates.jsonl"\n'
    "generator = retrieval\n"
    "agnes_threshold = 0.35\n"
    "linkage = average\n"
    "refine_dim = 64\n"
    "refine_epochs = 10\n"
    "refine_dropout = 0.8\n"
    "refine_learning_rate = 0.1\n"
    "min_products = 3\n",
    encoding="utf-8",
)
print(f"{len(products)} products, {len(topics)} topics")
